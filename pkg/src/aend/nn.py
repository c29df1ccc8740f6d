"""Neural building blocks on top of the tape engine.

Modules register their parameters in a shared ParamStore under dotted
names (enc.0.attn.wq.w, eda.final.dec.w_hh, ...) so checkpoints are a
flat name -> tensor mapping.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as tt
from .tensor import Tensor


class ParamStore:
    """Owns every trainable tensor of a model, keyed by dotted name."""

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.rng = np.random.default_rng([seed, 0x9A])
        self.dtype = dtype
        self.params = {}

    def _register(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ValueError("duplicate parameter name: %s" % name)
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def xavier(self, name: str, shape) -> Tensor:
        fan_in, fan_out = shape[0], shape[-1]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return self._register(name, self.rng.uniform(-limit, limit, size=shape))

    def uniform(self, name: str, shape, limit: float) -> Tensor:
        return self._register(name, self.rng.uniform(-limit, limit, size=shape))

    def normal(self, name: str, shape, std: float = 1.0) -> Tensor:
        return self._register(name, self.rng.normal(scale=std, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self._register(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self._register(name, np.ones(shape))

    def names(self):
        return list(self.params)

    def tensors(self):
        return list(self.params.values())

    def total_size(self) -> int:
        return sum(p.data.size for p in self.params.values())


@dataclass
class RunState:
    """Per-call execution flags: dropout only fires when training."""

    training: bool = False
    rng: Optional[np.random.Generator] = None
    dropout: float = 0.0

    def drop(self, x: Tensor) -> Tensor:
        if not self.training or self.dropout <= 0.0:
            return x
        return tt.dropout(x, self.dropout, self.rng, True)


EVAL = RunState()


class Linear:
    def __init__(self, store: ParamStore, prefix: str, d_in: int, d_out: int,
                 bias: bool = True):
        self.w = store.xavier(prefix + ".w", (d_in, d_out))
        self.b = store.zeros(prefix + ".b", (d_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.w
        return out + self.b if self.b is not None else out


class LayerNorm:
    def __init__(self, store: ParamStore, prefix: str, dim: int):
        self.gamma = store.ones(prefix + ".gamma", (dim,))
        self.beta = store.zeros(prefix + ".beta", (dim,))

    def __call__(self, x: Tensor) -> Tensor:
        return tt.layer_norm(x, self.gamma, self.beta)


def causal_mask(n: int) -> np.ndarray:
    """Additive mask: 0 on/below the diagonal, -1e9 above."""
    return np.triu(np.full((n, n), -1e9), k=1)


class MultiHeadAttention:
    """Scaled dot-product attention, self- or cross-, with optional mask.

    Queries come from q_in, keys/values from kv_in (q_in again when
    omitted). mask is an additive (Tq, Tk) array applied to every head's
    scores before the softmax.
    """

    def __init__(self, store: ParamStore, prefix: str, dim: int, heads: int):
        if dim % heads != 0:
            raise ValueError("dim %d not divisible by heads %d" % (dim, heads))
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(store, prefix + ".wq", dim, dim)
        self.wk = Linear(store, prefix + ".wk", dim, dim)
        self.wv = Linear(store, prefix + ".wv", dim, dim)
        self.wo = Linear(store, prefix + ".wo", dim, dim)

    def __call__(self, q_in: Tensor, kv_in: Optional[Tensor] = None,
                 mask: Optional[np.ndarray] = None) -> Tensor:
        if kv_in is None:
            kv_in = q_in
        q, k, v = self.wq(q_in), self.wk(kv_in), self.wv(kv_in)
        scale = 1.0 / math.sqrt(self.head_dim)
        mask_t = None
        if mask is not None:
            mask_t = Tensor(np.asarray(mask, dtype=q.dtype))
        outs = []
        for h in range(self.heads):
            lo, hi = h * self.head_dim, (h + 1) * self.head_dim
            qh = tt.slice_cols(q, lo, hi)
            kh = tt.slice_cols(k, lo, hi)
            vh = tt.slice_cols(v, lo, hi)
            scores = (qh @ tt.transpose(kh)) * scale
            if mask_t is not None:
                scores = scores + mask_t
            outs.append(tt.softmax(scores) @ vh)
        return self.wo(tt.concat(outs, axis=1))

    def attention_weights(self, q_in: Tensor, kv_in: Optional[Tensor] = None,
                          mask: Optional[np.ndarray] = None) -> list:
        """Per-head softmax matrices, for inspection and tests."""
        if kv_in is None:
            kv_in = q_in
        q, k = self.wq(q_in), self.wk(kv_in)
        scale = 1.0 / math.sqrt(self.head_dim)
        weights = []
        for h in range(self.heads):
            lo, hi = h * self.head_dim, (h + 1) * self.head_dim
            scores = (tt.slice_cols(q, lo, hi) @ tt.transpose(
                tt.slice_cols(k, lo, hi))) * scale
            if mask is not None:
                scores = scores + Tensor(np.asarray(mask, dtype=q.dtype))
            weights.append(tt.softmax(scores).data)
        return weights


class LSTM:
    """Single-layer LSTM; weights follow the fused-kernel gate packing."""

    def __init__(self, store: ParamStore, prefix: str, d_in: int, hidden: int):
        self.d_in = d_in
        self.hidden = hidden
        limit = 1.0 / math.sqrt(hidden)
        self.w_ih = store.uniform(prefix + ".w_ih", (d_in, 4 * hidden), limit)
        self.w_hh = store.uniform(prefix + ".w_hh", (hidden, 4 * hidden), limit)
        self.b = store.zeros(prefix + ".b", (4 * hidden,))

    def run(self, x: Tensor, h0: Optional[Tensor] = None,
            c0: Optional[Tensor] = None) -> Tensor:
        """Returns (T+1, H): hidden states h_1..h_T then the final cell."""
        if h0 is None:
            h0 = Tensor(np.zeros((1, self.hidden), dtype=x.dtype))
        if c0 is None:
            c0 = Tensor(np.zeros((1, self.hidden), dtype=x.dtype))
        return tt.lstm_sequence(x, h0, c0, self.w_ih, self.w_hh, self.b)

    def final_state(self, out: Tensor):
        """Split a run() result into (h_T, c_T), each (1, H)."""
        T = out.shape[0] - 1
        return tt.slice_rows(out, T - 1, T), tt.slice_rows(out, T, T + 1)
