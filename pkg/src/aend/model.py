"""Assembly of the seven diarization model variants.

Every variant is one encoder stack plus attractor machinery; they differ
along four axes:

  variant  blocks       intermediate attractors   conditioning      final EDA
  1        transformer  none                      none              LSTM
  2        transformer  speaker, shared weights   weighted, shared  LSTM
  3        transformer  attribute + speaker head  cross-attention   transformer
  4        conformer    attribute + speaker head  cross-attention   transformer
  5        transformer  speaker, per layer        weighted          LSTM
  6        transformer  speaker, per layer        cross-attention   LSTM
  7        transformer  speaker, per layer        cross-attention   transformer

Frame activity is always sigmoid(attractors @ embeddings^T). During
training the model decodes S+1 attractor slots (the extra slot learns to
signal "no more speakers"); posteriors come from the first S. At
inference the model decodes max_speakers slots and keeps the leading run
whose existence probability clears the threshold, which is equivalent to
decoding until the first stop because both decoder styles are causal in
the slot index.

Intermediate predictions (one per layer below the top) exist for the
auxiliary losses and for per-layer analysis. In the attribute variants
the conditioning path reads only the attribute attractors, so the
intermediate speaker heads are dead code at inference and can be pruned
without changing the output.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as tt
from .attractors import (AttributeEda, CrossAttentionConditioner, LstmEda,
                         SpeakerAttractorSet, TransformerEda,
                         WeightedConditioner, count_speakers)
from .encoder import INPUT_DIM, Encoder, EncoderConfig
from .nn import EVAL, ParamStore, RunState
from .tensor import Tensor
from .tolerances import EXISTENCE_THRESHOLD, MAX_DECODED_SPEAKERS


@dataclass(frozen=True)
class VariantTraits:
    block_kind: str        # transformer | conformer
    intermediate: str      # none | speaker | attribute
    shared: bool           # one intermediate parameter set reused per layer
    conditioning: str      # none | weighted | cross_attention
    final_eda: str         # lstm | transformer


VARIANT_TRAITS = {
    1: VariantTraits("transformer", "none", False, "none", "lstm"),
    2: VariantTraits("transformer", "speaker", True, "weighted", "lstm"),
    3: VariantTraits("transformer", "attribute", False, "cross_attention",
                     "transformer"),
    4: VariantTraits("conformer", "attribute", False, "cross_attention",
                     "transformer"),
    5: VariantTraits("transformer", "speaker", False, "weighted", "lstm"),
    6: VariantTraits("transformer", "speaker", False, "cross_attention",
                     "lstm"),
    7: VariantTraits("transformer", "speaker", False, "cross_attention",
                     "transformer"),
}


@dataclass
class ModelConfig:
    variant: int = 1
    layers: int = 4
    dim: int = 64
    heads: int = 4
    ff_dim: int = 256
    num_attributes: int = 8
    max_speakers: int = MAX_DECODED_SPEAKERS
    conv_kernel: int = 7
    dropout: float = 0.0
    input_dim: int = INPUT_DIM

    def __post_init__(self):
        if self.variant not in VARIANT_TRAITS:
            raise ValueError("unknown variant %r (have 1..7)" % (self.variant,))
        if self.layers < 1:
            raise ValueError("need at least one encoder layer")
        if self.max_speakers < 1 or self.num_attributes < 1:
            raise ValueError("max_speakers and num_attributes must be >= 1")

    @property
    def traits(self) -> VariantTraits:
        return VARIANT_TRAITS[self.variant]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(layers=self.layers, dim=self.dim,
                             heads=self.heads, ff_dim=self.ff_dim,
                             block_kind=self.traits.block_kind,
                             conv_kernel=self.conv_kernel,
                             dropout=self.dropout, input_dim=self.input_dim)


@dataclass
class LayerPrediction:
    """One layer's speaker activity guess, kept for aux losses/analysis."""

    posteriors: Tensor        # (S, T) over the real slots
    existence_logits: Tensor  # (decoded slots,)


@dataclass
class ModelOutput:
    posteriors: Tensor            # (S, T)
    existence_logits: Tensor      # (decoded slots,)
    attractors: SpeakerAttractorSet
    num_speakers: int             # rows of `posteriors`
    intermediates: list = field(default_factory=list)  # [LayerPrediction]
    embeddings: list = field(default_factory=list)     # [E_1 .. E_L]

    def loss_inputs(self):
        """(posteriors, logits) pairs in the aux-loss order, layer 1 first."""
        return [(p.posteriors, p.existence_logits) for p in self.intermediates]


class DiarizationModel:
    """One of the seven variants, parameters in a flat named store."""

    def __init__(self, config: ModelConfig, seed: int = 0,
                 dtype=np.float64, pruned: bool = False):
        traits = config.traits
        if pruned and traits.intermediate != "attribute":
            raise ValueError(
                "only attribute-attractor variants can be built pruned")
        self.config = config
        self.traits = traits
        self.seed = seed
        self.dtype = dtype
        self.pruned = pruned
        self.store = ParamStore(seed, dtype)
        self.encoder = Encoder(self.store, config.encoder_config())

        L, D, H = config.layers, config.dim, config.heads
        slots = config.max_speakers + 1  # one extra for the stop signal

        self.attr_edas = {}
        self.spk_edas = {}
        self.conditioners = {}

        if traits.intermediate == "speaker":
            if traits.shared:
                eda = LstmEda(self.store, "eda.shared.spk", D)
                for l in range(1, L):
                    self.spk_edas[l] = eda
            else:
                maker = self._speaker_eda_maker(slots)
                for l in range(1, L):
                    self.spk_edas[l] = maker("eda.%d.spk" % l)
        elif traits.intermediate == "attribute":
            for l in range(1, L + 1):
                self.attr_edas[l] = AttributeEda(
                    self.store, "eda.%d.attr" % l, D, H, config.num_attributes)
                if l == L or not pruned:
                    self.spk_edas[l] = TransformerEda(
                        self.store, "eda.%d.spk" % l, D, H, slots)

        if traits.intermediate != "attribute":
            # final EDA reads E_L directly
            if traits.final_eda == "lstm":
                self.spk_edas[L] = LstmEda(self.store, "eda.%d.spk" % L, D)
            else:
                self.spk_edas[L] = TransformerEda(self.store,
                                                  "eda.%d.spk" % L, D, H, slots)

        if traits.conditioning == "weighted":
            if traits.shared:
                cond = WeightedConditioner(self.store, "cond.shared", D)
                for l in range(1, L):
                    self.conditioners[l] = cond
            else:
                for l in range(1, L):
                    self.conditioners[l] = WeightedConditioner(
                        self.store, "cond.%d" % l, D)
        elif traits.conditioning == "cross_attention":
            for l in range(1, L):
                self.conditioners[l] = CrossAttentionConditioner(
                    self.store, "cond.%d" % l, D, H)

        # feature normalization carried with the model so inference does
        # not need the corpus metadata
        self.feature_mean = np.zeros(config.input_dim)
        self.feature_std = np.ones(config.input_dim)

    def _speaker_eda_maker(self, slots):
        if self.traits.final_eda == "lstm":
            return lambda prefix: LstmEda(self.store, prefix, self.config.dim)
        return lambda prefix: TransformerEda(self.store, prefix,
                                             self.config.dim,
                                             self.config.heads, slots)

    # ------------------------------------------------------------ plumbing

    def parameters(self):
        return self.store.tensors()

    def num_parameters(self) -> int:
        return self.store.total_size()

    def set_normalization(self, mean, std):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        std = np.asarray(std, dtype=float).reshape(-1)
        if mean.shape != (self.config.input_dim,) or mean.shape != std.shape:
            raise ValueError("normalization stats must have input_dim entries")
        self.feature_mean = mean
        self.feature_std = std

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.feature_mean) / np.maximum(self.feature_std, 1e-8)) \
            .astype(self.dtype)

    def zero_grad(self):
        for p in self.store.params.values():
            p.zero_grad()

    # -------------------------------------------------------------- forward

    def _decode(self, eda, source: Tensor, slots: int,
                shuffle_seed: int) -> SpeakerAttractorSet:
        if isinstance(eda, LstmEda):
            return eda(source, slots, shuffle_seed)
        return eda(source, slots)

    def _posterior(self, sa: SpeakerAttractorSet, e: Tensor,
                   real: int) -> Tensor:
        if real == 0:
            return Tensor(np.zeros((0, e.shape[0]), dtype=e.dtype))
        a = tt.slice_rows(sa.attractors, 0, real)
        return tt.sigmoid(a @ tt.transpose(e))

    def forward(self, x: Tensor, num_speakers: Optional[int] = None,
                state: RunState = EVAL, shuffle_seed: int = 0,
                collect_intermediate: Optional[bool] = None,
                threshold: float = EXISTENCE_THRESHOLD) -> ModelOutput:
        """Run the full network on a (T, input_dim) feature tensor.

        num_speakers given: training mode; decode num_speakers+1 slots
        everywhere and keep the first num_speakers rows as posteriors.
        num_speakers None: decode max_speakers slots and count the
        leading run of existence probabilities >= threshold.
        """
        training = num_speakers is not None
        if training:
            slots = num_speakers + 1
            if slots > self.config.max_speakers + 1:
                raise ValueError("num_speakers %d exceeds max_speakers %d"
                                 % (num_speakers, self.config.max_speakers))
        else:
            slots = self.config.max_speakers
        if collect_intermediate is None:
            collect_intermediate = training
        if collect_intermediate and self.pruned:
            raise ValueError("pruned model has no intermediate speaker heads")

        intermediates = []

        def real_count(sa: SpeakerAttractorSet) -> int:
            return num_speakers if training else \
                count_speakers(sa.existence_probs, threshold)

        def run_layer(e: Tensor, l: int) -> Tensor:
            """This layer's attractors, as the conditioner wants them;
            records the aux prediction on the side when collected."""
            if self.traits.intermediate == "attribute":
                aa = self.attr_edas[l](e)
                if collect_intermediate:
                    sa = self._decode(self.spk_edas[l], aa.attractors, slots,
                                      shuffle_seed)
                    intermediates.append(LayerPrediction(
                        self._posterior(sa, e, real_count(sa)),
                        sa.existence_logits))
                return aa.attractors
            sa = self._decode(self.spk_edas[l], e, slots, shuffle_seed)
            real = real_count(sa)
            if collect_intermediate:
                intermediates.append(LayerPrediction(
                    self._posterior(sa, e, real), sa.existence_logits))
            return tt.slice_rows(sa.attractors, 0, real)

        def conditioner(e: Tensor, l: int) -> Tensor:
            if self.traits.intermediate == "none":
                return e
            cond_input = run_layer(e, l)
            return self.conditioners[l](e, cond_input)

        hook = conditioner if self.traits.intermediate != "none" else None
        embeddings = self.encoder.encode(x, hook, state)
        e_last = embeddings[-1]

        L = self.config.layers
        if self.traits.intermediate == "attribute":
            final_source = self.attr_edas[L](e_last).attractors
        else:
            final_source = e_last
        sa = self._decode(self.spk_edas[L], final_source, slots, shuffle_seed)
        real = real_count(sa)
        posteriors = self._posterior(sa, e_last, real)
        return ModelOutput(posteriors, sa.existence_logits, sa, real,
                           intermediates, embeddings)


def build_model(variant: int, seed: int = 0, dtype=np.float64,
                **overrides) -> DiarizationModel:
    return DiarizationModel(ModelConfig(variant=variant, **overrides),
                            seed=seed, dtype=dtype)
