"""Tour of the reverse-mode tape: build an expression, differentiate it,
and check the gradients against finite differences by hand.

Every trainable piece of the package runs on this engine, so if the
numbers here line up, backprop through the full model is the same story
with more nodes.
"""

import numpy as np

from aend import tensor as tt
from aend.tensor import Tensor


def finite_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = f()
        flat[i] = keep - h
        lo = f()
        flat[i] = keep
        out[i] = (hi - lo) / (2 * h)
    return g


def main():
    rng = np.random.default_rng(7)

    print("== a scalar chain ==")
    x = Tensor(np.array([[0.3, -1.2, 0.8]]))
    w = Tensor(rng.normal(size=(3, 2)))
    loss = tt.tsum(tt.sigmoid(x @ w))
    loss.backward()
    print("loss           %.6f" % loss.data)
    print("dL/dw row 0    %s" % np.round(w.grad[0], 6))

    num = finite_diff(lambda: float(tt.tsum(tt.sigmoid(x @ w)).data), w.data)
    print("finite diff    %s" % np.round(num[0], 6))
    print("max |diff|     %.2e" % np.abs(w.grad - num).max())

    print()
    print("== gradients accumulate until cleared ==")
    w.zero_grad()
    tt.tsum(x @ w).backward()
    tt.tsum(x @ w).backward()
    once = finite_diff(lambda: float(tt.tsum(x @ w).data), w.data)
    print("two backward passes give 2x one pass: %s"
          % bool(np.allclose(w.grad, 2 * once)))

    print()
    print("== a bigger graph: tiny ridge regression by gradient descent ==")
    a = rng.normal(size=(40, 5))
    target = a @ rng.normal(size=(5, 1)) + 0.01 * rng.normal(size=(40, 1))
    wfit = Tensor(np.zeros((5, 1)))
    for step in range(200):
        wfit.zero_grad()
        resid = Tensor(a) @ wfit + Tensor(-target)
        loss = tt.tmean(resid * resid) + tt.tsum(wfit * wfit) * 1e-4
        loss.backward()
        wfit.data -= 0.5 * wfit.grad
        if step % 50 == 0:
            print("step %3d  loss %.6f" % (step, loss.data))
    print("final loss %.6f (noise floor is about 1e-4)" % loss.data)


if __name__ == "__main__":
    main()
