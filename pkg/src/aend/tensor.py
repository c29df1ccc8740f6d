"""Dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap numpy buffers (float64 by default, float32 for faster
training). Every differentiable operation records a node on a dynamic
tape that is rebuilt each forward pass; ``Tensor.backward`` walks the
recorded graph once, in reverse topological order.

Broadcasting is deliberately narrow: elementwise ops accept equal
shapes, python scalars, 0-d tensors, or a 1-d row-vector bias against a
2-d operand. Anything else raises ``DimensionError``. This keeps every
backward rule short enough to audit by eye.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when operand shapes do not satisfy an op's contract."""


def _dims(*shapes):
    return " vs ".join(str(tuple(s)) for s in shapes)


class Tensor:
    """A dense array plus an optional gradient and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_op", "_backward_done")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._backward_done = False

    # -- construction of interior nodes ------------------------------------

    @staticmethod
    def _node(data, parents, backward, op):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        out._op = op
        out._backward_done = False
        return out

    # -- bookkeeping --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data)

    def numpy(self):
        return self.data

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Propagate gradients from this node to all reachable leaves.

        ``grad`` defaults to ones, which only makes sense for a scalar
        output. Calling backward a second time on the same node without
        rebuilding the graph is an error.
        """
        if self._backward_done:
            raise RuntimeError("backward already ran on this graph; "
                               "re-run the forward pass first")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient "
                                 "requires a scalar output, got shape "
                                 f"{self.data.shape}")
            grad = np.ones_like(self.data)
        self._backward_done = True
        graph = Graph(self)
        self._accum_root(grad)
        graph.run()

    def _accum_root(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r})"

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, neg(other) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        return reshape(self, shape)


class Graph:
    """Topologically ordered record of one forward pass.

    Built lazily from the output node; ``run`` visits each node exactly
    once in reverse topological order and applies its backward rule.
    """

    def __init__(self, root):
        order = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order  # topological: parents before children

    def run(self):
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _same_dtype(a, b):
    if a.data.dtype != b.data.dtype:
        raise DimensionError(f"dtype mismatch: {a.data.dtype} vs {b.data.dtype}")


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def _bias_kind(a, b):
    """Classify an elementwise pairing: equal shapes, scalar, or row bias."""
    if a.shape == b.shape:
        return "same"
    if b.data.size == 1:
        return "scalar_b"
    if a.data.size == 1:
        return "scalar_a"
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return "bias_b"
    if b.data.ndim == 2 and a.data.ndim == 1 and b.shape[1] == a.shape[0]:
        return "bias_a"
    raise DimensionError("elementwise shape mismatch: " + _dims(a.shape, b.shape))


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _same_dtype(a, b)
    kind = _bias_kind(a, b)
    out_data = a.data + b.data

    def backward(g):
        if kind == "same":
            a._accum(g)
            b._accum(g)
        elif kind == "scalar_b":
            a._accum(g)
            b._accum(np.sum(g).reshape(b.shape))
        elif kind == "scalar_a":
            a._accum(np.sum(g).reshape(a.shape))
            b._accum(g)
        elif kind == "bias_b":
            a._accum(g)
            b._accum(g.sum(axis=0))
        else:  # bias_a
            a._accum(g.sum(axis=0))
            b._accum(g)

    return Tensor._node(out_data, (a, b), backward, "add")


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _same_dtype(a, b)
    kind = _bias_kind(a, b)
    out_data = a.data * b.data

    def backward(g):
        if kind == "same":
            a._accum(g * b.data)
            b._accum(g * a.data)
        elif kind == "scalar_b":
            a._accum(g * b.data)
            b._accum(np.sum(g * a.data).reshape(b.shape))
        elif kind == "scalar_a":
            a._accum(np.sum(g * b.data).reshape(a.shape))
            b._accum(g * a.data)
        elif kind == "bias_b":
            a._accum(g * b.data)
            b._accum((g * a.data).sum(axis=0))
        else:
            a._accum((g * b.data).sum(axis=0))
            b._accum(g * a.data)

    return Tensor._node(out_data, (a, b), backward, "mul")


def neg(a):
    a = _as_tensor(a)

    def backward(g):
        a._accum(-g)

    return Tensor._node(-a.data, (a,), backward, "neg")


def div(a, b):
    """Elementwise division; the denominator must be nowhere zero."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _same_dtype(a, b)
    kind = _bias_kind(a, b)
    if np.any(b.data == 0.0):
        raise ValueError("division by zero")
    out_data = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        if kind == "same":
            a._accum(ga)
            b._accum(gb)
        elif kind == "scalar_b":
            a._accum(ga)
            b._accum(np.sum(gb).reshape(b.shape))
        elif kind == "scalar_a":
            a._accum(np.sum(ga).reshape(a.shape))
            b._accum(gb)
        elif kind == "bias_b":
            a._accum(ga)
            b._accum(gb.sum(axis=0))
        else:
            a._accum(ga.sum(axis=0))
            b._accum(gb)

    return Tensor._node(out_data, (a, b), backward, "div")


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Strict 2-d matrix product; dL/da = g @ b.T, dL/db = a.T @ g."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _same_dtype(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul shape mismatch: " + _dims(a.shape, b.shape))
    out_data = a.data @ b.data

    def backward(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    return Tensor._node(out_data, (a, b), backward, "matmul")


def transpose(a):
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects 2-d, got {a.shape}")

    def backward(g):
        a._accum(g.T)

    return Tensor._node(a.data.T.copy(), (a,), backward, "transpose")


def reshape(a, shape):
    a = _as_tensor(a)
    old_shape = a.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accum(g.reshape(old_shape))

    return Tensor._node(out_data, (a,), backward, "reshape")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accum(g[tuple(idx)])

    return Tensor._node(out_data, tensors, backward, "concat")


def slice_rows(a, i0, i1):
    a = _as_tensor(a)
    out_data = a.data[i0:i1].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[i0:i1] = g
        a._accum(full)

    return Tensor._node(out_data, (a,), backward, "slice_rows")


def slice_cols(a, j0, j1):
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"slice_cols expects 2-d, got {a.shape}")
    out_data = a.data[:, j0:j1].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, j0:j1] = g
        a._accum(full)

    return Tensor._node(out_data, (a,), backward, "slice_cols")


def take_rows(a, index):
    """Row gather; backward scatter-adds, so repeated rows accumulate."""
    a = _as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    out_data = a.data[index].copy()

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accum(full)

    return Tensor._node(out_data, (a,), backward, "take_rows")


def tsum(a):
    a = _as_tensor(a)
    out_data = np.asarray(a.data.sum(), dtype=a.dtype)

    def backward(g):
        a._accum(np.full_like(a.data, g))

    return Tensor._node(out_data, (a,), backward, "sum")


def tmean(a):
    a = _as_tensor(a)
    n = a.data.size
    out_data = np.asarray(a.data.mean(), dtype=a.dtype)

    def backward(g):
        a._accum(np.full_like(a.data, g / n))

    return Tensor._node(out_data, (a,), backward, "mean")


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        a._accum(g * out_data)

    return Tensor._node(out_data, (a,), backward, "exp")


def log(a):
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log of non-positive value; clamp upstream")
    out_data = np.log(a.data)

    def backward(g):
        a._accum(g / a.data)

    return Tensor._node(out_data, (a,), backward, "log")


def _sigmoid_np(x):
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = _as_tensor(a)
    out_data = _sigmoid_np(a.data)

    def backward(g):
        a._accum(g * out_data * (1.0 - out_data))

    return Tensor._node(out_data, (a,), backward, "sigmoid")


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        a._accum(g * (1.0 - out_data * out_data))

    return Tensor._node(out_data, (a,), backward, "tanh")


def relu(a):
    a = _as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        a._accum(g * (a.data > 0.0))

    return Tensor._node(out_data, (a,), backward, "relu")


def softplus(a):
    """log(1 + exp(x)), computed as max(x, 0) + log1p(exp(-|x|))."""
    a = _as_tensor(a)
    out_data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    sig = _sigmoid_np(a.data)

    def backward(g):
        a._accum(g * sig)

    return Tensor._node(out_data, (a,), backward, "softplus")


def swish(a):
    """x * sigmoid(x)."""
    a = _as_tensor(a)
    sig = _sigmoid_np(a.data)
    out_data = a.data * sig

    def backward(g):
        a._accum(g * (sig + a.data * sig * (1.0 - sig)))

    return Tensor._node(out_data, (a,), backward, "swish")


def clip(a, lo, hi):
    """Clamp values; gradient passes through only where lo <= x <= hi."""
    a = _as_tensor(a)
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a._accum(g * mask)

    return Tensor._node(out_data, (a,), backward, "clip")


def softmax(a, axis=-1):
    """Numerically stable softmax along ``axis``; rows sum to one."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accum((g - dot) * out_data)

    return Tensor._node(out_data, (a,), backward, "softmax")


def glu(a, axis=-1):
    """Gated linear unit: split in half along ``axis``, first half gated
    by sigmoid of the second."""
    a = _as_tensor(a)
    n = a.shape[axis]
    if n % 2 != 0:
        raise DimensionError(f"glu needs an even dimension, got {n}")
    half = n // 2
    if axis in (-1, a.data.ndim - 1) and a.data.ndim == 2:
        va = slice_cols(a, 0, half)
        vb = slice_cols(a, half, n)
    elif axis == 0:
        va = slice_rows(a, 0, half)
        vb = slice_rows(a, half, n)
    else:
        raise DimensionError(f"glu unsupported axis {axis} for shape {a.shape}")
    return mul(va, sigmoid(vb))


# ---------------------------------------------------------------------------
# structured primitives
# ---------------------------------------------------------------------------

def layer_norm(x, gamma, beta, eps=1e-5):
    """Per-row normalization to zero mean / unit variance, then affine.

    x: (T, D); gamma, beta: (D,). ``eps`` guards constant rows.
    """
    x = _as_tensor(x)
    gamma = _as_tensor(gamma, like=x)
    beta = _as_tensor(beta, like=x)
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    if x.data.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError("layer_norm shapes: " +
                             _dims(x.shape, gamma.shape, beta.shape))
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        gamma._accum((g * xhat).sum(axis=0))
        beta._accum(g.sum(axis=0))
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        x._accum(inv_std * (dxhat - m1 - xhat * m2))

    return Tensor._node(out_data, (x, gamma, beta), backward, "layer_norm")


def depthwise_conv1d(x, kernel):
    """Per-channel 1-d convolution along time with same padding.

    x: (T, D); kernel: (K, D) with K odd. Channel d of the output is the
    correlation of channel d of the input with kernel column d.
    """
    x = _as_tensor(x)
    kernel = _as_tensor(kernel, like=x)
    _same_dtype(x, kernel)
    if x.data.ndim != 2 or kernel.data.ndim != 2 or kernel.shape[1] != x.shape[1]:
        raise DimensionError("depthwise_conv1d shapes: " +
                             _dims(x.shape, kernel.shape))
    K = kernel.shape[0]
    if K % 2 == 0:
        raise DimensionError(f"kernel length must be odd, got {K}")
    T = x.shape[0]
    pad = K // 2
    xp = np.zeros((T + 2 * pad, x.shape[1]), dtype=x.dtype)
    xp[pad:pad + T] = x.data
    out_data = np.zeros_like(x.data)
    for j in range(K):
        out_data += kernel.data[j] * xp[j:j + T]

    def backward(g):
        gk = np.empty_like(kernel.data)
        for j in range(K):
            gk[j] = (g * xp[j:j + T]).sum(axis=0)
        kernel._accum(gk)
        gp = np.zeros_like(xp)
        for j in range(K):
            gp[j:j + T] += kernel.data[j] * g
        x._accum(gp[pad:pad + T])

    return Tensor._node(out_data, (x, kernel), backward, "depthwise_conv1d")


def lstm_cell(x, h, c, w_ih, w_hh, b):
    """One LSTM step. Returns the (B, 2H) concatenation [h' | c'].

    x: (B, I); h, c: (B, H); w_ih: (I, 4H); w_hh: (H, 4H); b: (4H,).
    Gate packing order along the 4H axis is input, forget, cell, output.
    """
    x = _as_tensor(x)
    h = _as_tensor(h, like=x)
    c = _as_tensor(c, like=x)
    w_ih = _as_tensor(w_ih, like=x)
    w_hh = _as_tensor(w_hh, like=x)
    b = _as_tensor(b, like=x)
    B, I = x.shape
    H = h.shape[1]
    if (h.shape != (B, H) or c.shape != (B, H) or w_ih.shape != (I, 4 * H)
            or w_hh.shape != (H, 4 * H) or b.shape != (4 * H,)):
        raise DimensionError("lstm_cell shapes: " + _dims(
            x.shape, h.shape, c.shape, w_ih.shape, w_hh.shape, b.shape))

    z = x.data @ w_ih.data + h.data @ w_hh.data + b.data
    i = _sigmoid_np(z[:, 0 * H:1 * H])
    f = _sigmoid_np(z[:, 1 * H:2 * H])
    g_ = np.tanh(z[:, 2 * H:3 * H])
    o = _sigmoid_np(z[:, 3 * H:4 * H])
    c_new = f * c.data + i * g_
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    out_data = np.concatenate([h_new, c_new], axis=1)

    def backward(grad):
        gh = grad[:, :H]
        gc_out = grad[:, H:]
        do = gh * tanh_c
        dc = gc_out + gh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g_
        df = dc * c.data
        dg = dc * i
        dz = np.empty_like(z)
        dz[:, 0 * H:1 * H] = di * i * (1.0 - i)
        dz[:, 1 * H:2 * H] = df * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dg * (1.0 - g_ * g_)
        dz[:, 3 * H:4 * H] = do * o * (1.0 - o)
        x._accum(dz @ w_ih.data.T)
        h._accum(dz @ w_hh.data.T)
        c._accum(dc * f)
        w_ih._accum(x.data.T @ dz)
        w_hh._accum(h.data.T @ dz)
        b._accum(dz.sum(axis=0))

    return Tensor._node(out_data, (x, h, c, w_ih, w_hh, b), backward, "lstm_cell")


def lstm_sequence(x, h0, c0, w_ih, w_hh, b):
    """Run an LSTM over every row of x inside a single tape node.

    x: (T, I); h0, c0: (1, H). Returns (T + 1, H): rows 0..T-1 are the
    hidden states h_1..h_T, row T is the final cell state c_T. Gate
    conventions match lstm_cell; fusing the time loop keeps per-step
    tape overhead off long sequences, and the weight gradients are
    accumulated with two matmuls after the reverse pass.
    """
    x = _as_tensor(x)
    h0 = _as_tensor(h0, like=x)
    c0 = _as_tensor(c0, like=x)
    w_ih = _as_tensor(w_ih, like=x)
    w_hh = _as_tensor(w_hh, like=x)
    b = _as_tensor(b, like=x)
    if x.data.ndim != 2 or x.shape[0] < 1:
        raise DimensionError(f"lstm_sequence input must be (T>=1, I), got {x.shape}")
    T, I = x.shape
    H = h0.shape[-1] if h0.data.ndim else 0
    if (h0.shape != (1, H) or c0.shape != (1, H) or w_ih.shape != (I, 4 * H)
            or w_hh.shape != (H, 4 * H) or b.shape != (4 * H,)):
        raise DimensionError("lstm_sequence shapes: " + _dims(
            x.shape, h0.shape, c0.shape, w_ih.shape, w_hh.shape, b.shape))

    dt = x.dtype
    hs = np.empty((T + 1, H), dtype=dt)  # hs[t] = h_t, hs[0] = h0
    cs = np.empty((T + 1, H), dtype=dt)
    hs[0], cs[0] = h0.data[0], c0.data[0]
    gi = np.empty((T, H), dtype=dt)
    gf = np.empty((T, H), dtype=dt)
    gg = np.empty((T, H), dtype=dt)
    go = np.empty((T, H), dtype=dt)
    tc = np.empty((T, H), dtype=dt)
    pre = x.data @ w_ih.data + b.data
    for t in range(T):
        z = pre[t] + hs[t] @ w_hh.data
        gi[t] = _sigmoid_np(z[0 * H:1 * H])
        gf[t] = _sigmoid_np(z[1 * H:2 * H])
        gg[t] = np.tanh(z[2 * H:3 * H])
        go[t] = _sigmoid_np(z[3 * H:4 * H])
        cs[t + 1] = gf[t] * cs[t] + gi[t] * gg[t]
        tc[t] = np.tanh(cs[t + 1])
        hs[t + 1] = go[t] * tc[t]
    out_data = np.concatenate([hs[1:], cs[-1:]], axis=0)

    def backward(grad):
        dz_all = np.empty((T, 4 * H), dtype=dt)
        dh = grad[T - 1].copy()
        dc = grad[T].copy()
        for t in range(T - 1, -1, -1):
            do = dh * tc[t]
            dc = dc + dh * go[t] * (1.0 - tc[t] * tc[t])
            dz = dz_all[t]
            dz[0 * H:1 * H] = dc * gg[t] * gi[t] * (1.0 - gi[t])
            dz[1 * H:2 * H] = dc * cs[t] * gf[t] * (1.0 - gf[t])
            dz[2 * H:3 * H] = dc * gi[t] * (1.0 - gg[t] * gg[t])
            dz[3 * H:4 * H] = do * go[t] * (1.0 - go[t])
            dc = dc * gf[t]
            dh = dz @ w_hh.data.T
            if t > 0:
                dh = dh + grad[t - 1]
        x._accum(dz_all @ w_ih.data.T)
        h0._accum(dh[None, :])
        c0._accum(dc[None, :])
        w_ih._accum(x.data.T @ dz_all)
        w_hh._accum(hs[:T].T @ dz_all)
        b._accum(dz_all.sum(axis=0))

    return Tensor._node(out_data, (x, h0, c0, w_ih, w_hh, b), backward,
                        "lstm_sequence")


def dropout(x, p, rng, training):
    """Inverted dropout; identity when not training or p == 0."""
    x = _as_tensor(x)
    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    out_data = x.data * keep

    def backward(g):
        x._accum(g * keep)

    return Tensor._node(out_data, (x,), backward, "dropout")
