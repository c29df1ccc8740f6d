"""Frame encoder: a stack of transformer or conformer blocks.

Embeddings stay (T, D) at every layer. A per-layer conditioning hook can
rewrite the embeddings between layers (identity hook = plain stack); the
hook is applied after layers 1..L-1 but never after the last layer,
whose output feeds the final attractor computation directly.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .nn import EVAL, LayerNorm, Linear, MultiHeadAttention, ParamStore, RunState
from .tensor import Tensor

INPUT_DIM = 345


@dataclass
class EncoderConfig:
    layers: int = 4
    dim: int = 64
    heads: int = 4
    ff_dim: int = 256
    block_kind: str = "transformer"  # or "conformer"
    conv_kernel: int = 7
    dropout: float = 0.0
    input_dim: int = INPUT_DIM

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.block_kind not in ("transformer", "conformer"):
            raise ValueError("unknown block kind %r" % self.block_kind)
        if self.conv_kernel % 2 != 1:
            raise ValueError("conv_kernel must be odd")


class FeedForward:
    def __init__(self, store: ParamStore, prefix: str, dim: int, ff_dim: int):
        self.w1 = Linear(store, prefix + ".w1", dim, ff_dim)
        self.w2 = Linear(store, prefix + ".w2", ff_dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.w2(tt.relu(self.w1(x)))


class InputProjection:
    """Linear map from stacked features to model dim, then layer norm."""

    def __init__(self, store: ParamStore, prefix: str, cfg: EncoderConfig):
        self.proj = Linear(store, prefix + ".proj", cfg.input_dim, cfg.dim)
        self.norm = LayerNorm(store, prefix + ".ln", cfg.dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.norm(self.proj(x))


class TransformerBlock:
    """Pre-norm self-attention + feed-forward, both residual.

    No positional encoding anywhere: frame order is carried by content
    only, which makes the block permutation-equivariant over frames.
    """

    def __init__(self, store: ParamStore, prefix: str, cfg: EncoderConfig):
        self.ln1 = LayerNorm(store, prefix + ".ln1", cfg.dim)
        self.attn = MultiHeadAttention(store, prefix + ".attn", cfg.dim, cfg.heads)
        self.ln2 = LayerNorm(store, prefix + ".ln2", cfg.dim)
        self.ffn = FeedForward(store, prefix + ".ffn", cfg.dim, cfg.ff_dim)

    def __call__(self, x: Tensor, state: RunState = EVAL) -> Tensor:
        x = x + state.drop(self.attn(self.ln1(x)))
        return x + state.drop(self.ffn(self.ln2(x)))


class ConformerBlock:
    """Macaron block: half-FFN, attention, conv module, half-FFN, norm.

    The conv module (pointwise expansion -> GLU -> depthwise conv ->
    swish -> pointwise projection) mixes neighboring frames, so this
    block is deliberately NOT permutation-equivariant.
    """

    def __init__(self, store: ParamStore, prefix: str, cfg: EncoderConfig):
        dim = cfg.dim
        self.ln_ff1 = LayerNorm(store, prefix + ".ln_ff1", dim)
        self.ffn1 = FeedForward(store, prefix + ".ffn1", dim, cfg.ff_dim)
        self.ln_att = LayerNorm(store, prefix + ".ln_att", dim)
        self.attn = MultiHeadAttention(store, prefix + ".attn", dim, cfg.heads)
        self.ln_conv = LayerNorm(store, prefix + ".ln_conv", dim)
        self.pw1 = Linear(store, prefix + ".conv_pw1", dim, 2 * dim)
        self.dw_kernel = store.uniform(prefix + ".conv_dw",
                                       (cfg.conv_kernel, dim),
                                       1.0 / np.sqrt(cfg.conv_kernel))
        self.pw2 = Linear(store, prefix + ".conv_pw2", dim, dim)
        self.ln_ff2 = LayerNorm(store, prefix + ".ln_ff2", dim)
        self.ffn2 = FeedForward(store, prefix + ".ffn2", dim, cfg.ff_dim)
        self.ln_out = LayerNorm(store, prefix + ".ln_out", dim)

    def _conv_module(self, x: Tensor) -> Tensor:
        y = tt.glu(self.pw1(x), axis=1)
        y = tt.depthwise_conv1d(y, self.dw_kernel)
        return self.pw2(tt.swish(y))

    def __call__(self, x: Tensor, state: RunState = EVAL) -> Tensor:
        x = x + state.drop(self.ffn1(self.ln_ff1(x))) * 0.5
        x = x + state.drop(self.attn(self.ln_att(x)))
        x = x + state.drop(self._conv_module(self.ln_conv(x)))
        x = x + state.drop(self.ffn2(self.ln_ff2(x))) * 0.5
        return self.ln_out(x)


class Encoder:
    """Input projection plus L blocks with an inter-layer hook."""

    def __init__(self, store: ParamStore, cfg: EncoderConfig):
        self.cfg = cfg
        self.input_projection = InputProjection(store, "enc.in", cfg)
        block_cls = TransformerBlock if cfg.block_kind == "transformer" \
            else ConformerBlock
        self.blocks = [block_cls(store, "enc.%d" % (l + 1), cfg)
                       for l in range(cfg.layers)]

    def encode(self, x: Tensor, conditioner=None, state: RunState = EVAL) -> list:
        """Returns [E_1, ..., E_L]; conditioner(E_l, l) rewrites the input
        of the next layer for l in 1..L-1."""
        e = self.input_projection(x)
        outs = []
        for l, block in enumerate(self.blocks, start=1):
            e = block(e, state)
            outs.append(e)
            if conditioner is not None and l < len(self.blocks):
                e = conditioner(e, l)
        return outs
