"""AdamW with decoupled weight decay, operating on flat parameter lists."""

from __future__ import annotations

import numpy as np


class AdamWState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.step = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adamw_step(params, grads, state, lr, betas=(0.9, 0.999),
               weight_decay=0.0, eps=1e-8):
    """One optimizer step, in place on ``params``.

    Decay is decoupled from the adaptive update: with zero gradient each
    weight shrinks by exactly (1 - lr * weight_decay).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must be parallel lists")
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= lr * (update + weight_decay * p.data)


def global_grad_norm(grads):
    total = 0.0
    for g in grads:
        if g is not None:
            total += float(np.sum(g.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_gradients(grads, max_norm):
    """Scale all gradients in place so the global norm is <= max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for g in grads:
            if g is not None:
                g *= scale
    return norm
