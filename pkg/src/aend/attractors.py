"""Attractor machinery.

A speaker attractor is a D-vector whose dot product with each frame
embedding (through a sigmoid) gives that speaker's activity posterior.
Three generators live here:

  - LstmEda: encoder LSTM over (seeded) shuffled frames, decoder LSTM fed
    zero vectors, one attractor per decode step, a shared linear
    existence head. Shuffle-sensitive by construction.
  - TransformerEda: learned query slots with causal self-attention among
    slots and cross-attention to frames. Frame-order invariant, no
    shuffling needed; slot k never sees slots > k.
  - AttributeEda: N query slots with full (non-causal) self-attention and
    cross-attention to frames; no existence head. The N attractors
    over-segment speaker space and feed conditioning and the speaker EDA.

Conditioning rewrites embeddings between encoder layers, either by
activity-weighted attractor sums through a projection, or by multi-head
cross-attention onto the attractor set; both are residual, so a zeroed
output path degrades to the identity.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as tt
from .nn import LSTM, LayerNorm, Linear, MultiHeadAttention, ParamStore, causal_mask
from .tensor import Tensor
from .tolerances import EXISTENCE_THRESHOLD
from .encoder import FeedForward


@dataclass
class SpeakerAttractorSet:
    attractors: Tensor  # (S', D)
    existence_logits: Tensor  # (S',)

    @property
    def existence_probs(self) -> np.ndarray:
        x = self.existence_logits.data
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    @property
    def count(self) -> int:
        return self.attractors.shape[0]


@dataclass
class AttributeAttractorSet:
    attractors: Tensor  # (N, D)

    @property
    def count(self) -> int:
        return self.attractors.shape[0]


def count_speakers(existence_probs, threshold: float = EXISTENCE_THRESHOLD) -> int:
    """Length of the leading run of probabilities >= threshold.

    Decoding stops at the first sub-threshold slot; anything after it is
    ignored even if it clears the threshold again.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    n = 0
    for p in np.asarray(existence_probs).reshape(-1):
        if p < threshold:
            break
        n += 1
    return n


class LstmEda:
    """Classic encoder-decoder attractor module."""

    def __init__(self, store: ParamStore, prefix: str, dim: int):
        self.dim = dim
        self.enc = LSTM(store, prefix + ".enc", dim, dim)
        self.dec = LSTM(store, prefix + ".dec", dim, dim)
        self.exist = Linear(store, prefix + ".exist", dim, 1)

    def __call__(self, e: Tensor, num_attractors: int,
                 shuffle_seed: Optional[int] = None) -> SpeakerAttractorSet:
        if num_attractors < 1:
            raise ValueError("need at least one attractor slot")
        frames = e
        if shuffle_seed is not None:
            perm = np.random.default_rng([shuffle_seed, e.shape[0]]) \
                .permutation(e.shape[0])
            frames = tt.take_rows(e, perm)
        h, c = self.enc.final_state(self.enc.run(frames))
        zeros = Tensor(np.zeros((num_attractors, self.dim), dtype=e.dtype))
        dec_out = tt.lstm_sequence(zeros, h, c, self.dec.w_ih, self.dec.w_hh,
                                   self.dec.b)
        attractors = tt.slice_rows(dec_out, 0, num_attractors)
        logits = self.exist(attractors).reshape(num_attractors)
        return SpeakerAttractorSet(attractors, logits)


class TransformerEda:
    """Auto-regressive attractor decoding without recurrence.

    max_slots learned queries are allocated once; a call materializes the
    first S' of them, runs causal self-attention among the slots, then
    cross-attention over the input sequence, then a feed-forward, all
    pre-norm residual. Because every sublayer is row-local apart from the
    causally masked one, slot k is a function of slots <= k only.
    """

    def __init__(self, store: ParamStore, prefix: str, dim: int, heads: int,
                 max_slots: int):
        self.max_slots = max_slots
        self.queries = store.normal(prefix + ".queries", (max_slots, dim))
        self.ln1 = LayerNorm(store, prefix + ".ln1", dim)
        self.self_attn = MultiHeadAttention(store, prefix + ".self_attn",
                                            dim, heads)
        self.ln2 = LayerNorm(store, prefix + ".ln2", dim)
        self.cross_attn = MultiHeadAttention(store, prefix + ".cross_attn",
                                             dim, heads)
        self.ln3 = LayerNorm(store, prefix + ".ln3", dim)
        self.ffn = FeedForward(store, prefix + ".ffn", dim, 2 * dim)
        self.exist = Linear(store, prefix + ".exist", dim, 1)

    def decode(self, e: Tensor, num_slots: int) -> Tensor:
        if not 1 <= num_slots <= self.max_slots:
            raise ValueError("num_slots %d outside [1, %d]"
                             % (num_slots, self.max_slots))
        q = tt.slice_rows(self.queries, 0, num_slots)
        if q.dtype != e.dtype:
            q = Tensor(q.data.astype(e.dtype))
        x = q + self.self_attn(self.ln1(q), mask=causal_mask(num_slots))
        x = x + self.cross_attn(self.ln2(x), e)
        return x + self.ffn(self.ln3(x))

    def __call__(self, e: Tensor, num_attractors: int) -> SpeakerAttractorSet:
        attractors = self.decode(e, num_attractors)
        logits = self.exist(attractors).reshape(num_attractors)
        return SpeakerAttractorSet(attractors, logits)


class AttributeEda:
    """Non-autoregressive producer of N attribute attractors."""

    def __init__(self, store: ParamStore, prefix: str, dim: int, heads: int,
                 num_slots: int):
        self.num_slots = num_slots
        self.queries = store.normal(prefix + ".queries", (num_slots, dim))
        self.ln1 = LayerNorm(store, prefix + ".ln1", dim)
        self.self_attn = MultiHeadAttention(store, prefix + ".self_attn",
                                            dim, heads)
        self.ln2 = LayerNorm(store, prefix + ".ln2", dim)
        self.cross_attn = MultiHeadAttention(store, prefix + ".cross_attn",
                                             dim, heads)
        self.ln3 = LayerNorm(store, prefix + ".ln3", dim)
        self.ffn = FeedForward(store, prefix + ".ffn", dim, 2 * dim)

    def __call__(self, e: Tensor) -> AttributeAttractorSet:
        q = self.queries
        if q.dtype != e.dtype:
            q = Tensor(q.data.astype(e.dtype))
        x = q + self.self_attn(self.ln1(q))
        x = x + self.cross_attn(self.ln2(x), e)
        return AttributeAttractorSet(x + self.ffn(self.ln3(x)))


class WeightedConditioner:
    """Activity-weighted attractor feedback through a projection.

    e + sigmoid(e A^T) A W: the T x S activity posteriors mix the
    attractors into each frame, projected by a D x D matrix. Zero
    attractors or a zero projection make this the identity.
    """

    def __init__(self, store: ParamStore, prefix: str, dim: int):
        self.w = store.xavier(prefix + ".w", (dim, dim))

    def __call__(self, e: Tensor, attractors: Tensor) -> Tensor:
        if attractors.shape[0] == 0:
            return e
        act = tt.sigmoid(e @ tt.transpose(attractors))
        return e + (act @ attractors) @ self.w


class CrossAttentionConditioner:
    """Frames attend over the attractor set; residual add."""

    def __init__(self, store: ParamStore, prefix: str, dim: int, heads: int):
        self.mha = MultiHeadAttention(store, prefix + ".mha", dim, heads)

    def __call__(self, e: Tensor, attractors: Tensor) -> Tensor:
        if attractors.shape[0] == 0:
            return e
        return e + self.mha(e, attractors)
