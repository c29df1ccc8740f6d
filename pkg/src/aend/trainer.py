"""Training loop: chunked sampling, speaker-count batching, AdamW.

Each epoch draws one random chunk per recording, shuffles, then sorts by
speaker count so most batches need no padding. When a batch does mix
counts, every item decodes max-S+1 attractor slots and items with fewer
real speakers keep label matrices with fewer rows; the padded loss
scores the surplus slots against silence and marks them non-existent.

All randomness descends from (config seed, epoch), so a (seed, config,
corpus) triple pins the whole trajectory. NaN losses abort immediately
with the batch spelled out, since a diverged run that keeps going only
buries the evidence.
"""

import json
import math
import os
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np
from scipy.stats import ortho_group

from . import datagen
from . import losses as ls
from . import metrics as mx
from .checkpoint import load_checkpoint, save_checkpoint
from .inference import binarize, diarize
from .model import DiarizationModel, ModelConfig
from .nn import RunState
from .optim import AdamWState, adamw_step, clip_gradients
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    variant: int = 1
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    lr_floor: float = 1.0  # final lr as a fraction of lr (cosine decay)
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    warmup_steps: int = 2000
    grad_clip: float = 5.0
    chunk_frames: int = 500
    seed: int = 0
    eval_every: int = 5
    alpha: float = 1.0
    beta: float = 1.0
    dtype: str = "float32"
    layers: int = 4
    dim: int = 64
    heads: int = 4
    ff_dim: int = 256
    num_attributes: int = 8
    max_speakers: int = 8
    conv_kernel: int = 7
    dropout: float = 0.0
    augment_rotations: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.chunk_frames < 1:
            raise ValueError("chunk_frames must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.augment_rotations < 0:
            raise ValueError("augment_rotations must be >= 0")
        if not 0.0 < self.lr_floor <= 1.0:
            raise ValueError("lr_floor must be in (0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def model_config(self) -> ModelConfig:
        return ModelConfig(variant=self.variant, layers=self.layers,
                           dim=self.dim, heads=self.heads, ff_dim=self.ff_dim,
                           num_attributes=self.num_attributes,
                           max_speakers=self.max_speakers,
                           conv_kernel=self.conv_kernel,
                           dropout=self.dropout)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


def config_to_text(cfg: TrainConfig) -> str:
    """Flat key=value lines, one per field, in declaration order."""
    return "".join("%s=%s\n" % (f.name, getattr(cfg, f.name))
                   for f in fields(TrainConfig))


def config_from_text(text: str) -> TrainConfig:
    """Parse key=value lines; omitted fields keep their defaults."""
    casts = {"int": int, "float": float, "str": str}
    types = {f.name: (casts[f.type] if isinstance(f.type, str) else f.type)
             for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError("line %d: expected key=value" % lineno)
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in types:
            raise ValueError("line %d: unknown key %r" % (lineno, key))
        values[key] = types[key](raw)
    return TrainConfig(**values)


def save_config(cfg: TrainConfig, path: str) -> None:
    with open(path, "w") as f:
        f.write(config_to_text(cfg))


def load_config(path: str) -> TrainConfig:
    with open(path) as f:
        return config_from_text(f.read())


@dataclass
class TrainResult:
    best_path: str
    final_path: str
    log_path: str
    config_path: str
    history: list
    steps: int
    best_epoch: int
    best_valid_loss: float
    final_valid_der: Optional[float]


def _chunk(rec, chunk_frames: int, rng) -> tuple:
    """A random window of the recording with silent speaker rows dropped,
    so the label rows are exactly the speakers audible in the chunk."""
    t = rec.num_frames
    if t <= chunk_frames:
        lo = 0
        hi = t
    else:
        lo = int(rng.integers(0, t - chunk_frames + 1))
        hi = lo + chunk_frames
    labels = rec.labels[:, lo:hi]
    labels = labels[labels.any(axis=1)]
    return rec.features[lo:hi], labels.astype(np.float64), lo


def _evaluate(model, records, cfg: TrainConfig):
    """(mean loss, corpus DER) over a split, deterministically."""
    losses = []
    acc = mx.ScoreAccumulator()
    for rec in records:
        feats, labels, _ = _chunk(rec, cfg.chunk_frames,
                                  np.random.default_rng(0))
        x = Tensor(model.normalize(feats))
        out = model.forward(x, num_speakers=labels.shape[0], shuffle_seed=0)
        lb = ls.total_loss(out.posteriors, out.existence_logits, labels,
                           out.loss_inputs(), alpha=cfg.alpha, beta=cfg.beta)
        losses.append(float(lb.total.data))
        post = diarize(model, rec.features)
        acc.add(rec.labels, binarize(post))
    return float(np.mean(losses)), acc.score().der


def train(corpus_dir, cfg: TrainConfig, out_dir,
          resume: bool = False) -> TrainResult:
    train_recs = datagen.load_split(corpus_dir, "train")
    valid_recs = datagen.load_split(corpus_dir, "valid")
    meta = datagen.load_meta(corpus_dir)

    for rec in train_recs + valid_recs:
        if rec.num_speakers >= cfg.num_attributes and \
                cfg.model_config().traits.intermediate == "attribute":
            raise ValueError(
                "recording %s has %d speakers; attribute count %d must "
                "exceed every speaker count" %
                (rec.id, rec.num_speakers, cfg.num_attributes))

    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    best_path = os.path.join(out_dir, "best.ckpt")
    final_path = os.path.join(out_dir, "final.ckpt")
    log_path = os.path.join(out_dir, "train_log.jsonl")
    config_path = os.path.join(out_dir, "config.txt")

    history = []
    start_epoch = 0
    best_loss = math.inf
    best_epoch = 0
    final_der = None

    if resume:
        if not (os.path.isfile(final_path) and os.path.isfile(log_path)):
            raise FileNotFoundError("nothing to resume in %s" % out_dir)
        prior = load_config(config_path)
        if replace(prior, epochs=cfg.epochs) != cfg:
            raise ValueError(
                "resume config differs from %s in more than epochs"
                % config_path)
        model = load_checkpoint(final_path, expect_variant=cfg.variant,
                                dtype=cfg.np_dtype)
        with open(log_path) as f:
            history = [json.loads(line) for line in f]
        if history:
            start_epoch = history[-1]["epoch"]
        for line in history:
            if line["valid_loss"] is not None and line["valid_loss"] < best_loss:
                best_loss = line["valid_loss"]
                best_epoch = line["epoch"]
    else:
        model = DiarizationModel(cfg.model_config(), seed=cfg.seed,
                                 dtype=cfg.np_dtype)
    model.set_normalization(meta["feature_mean"], meta["feature_std"])
    params = model.store.tensors()
    opt = AdamWState(params)
    total_steps = cfg.epochs * math.ceil(len(train_recs) / cfg.batch_size)
    # optimizer moments restart at zero on resume; only the step counter
    # (and with it the warmup schedule) carries over
    opt.step = start_epoch * math.ceil(len(train_recs) / cfg.batch_size)
    save_config(cfg, config_path)

    with open(log_path, "a" if resume else "w") as log_file:
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            rng = np.random.default_rng([cfg.seed, 7, epoch])
            chunks = []
            for rec in train_recs:
                feats, labels, lo = _chunk(rec, cfg.chunk_frames, rng)
                if cfg.augment_rotations > 0:
                    # voiceprints and noise are isotropic, so rotating
                    # feature space yields a fresh, equally valid set of
                    # speakers for the same activity labels; each recording
                    # cycles through a fixed pool of augment_rotations
                    # matrices so the optimizer revisits each synthetic
                    # speaker set instead of chasing a moving target
                    slot = epoch % cfg.augment_rotations
                    q_rng = np.random.default_rng(
                        [cfg.seed, 11, int(rec.id.lstrip("r")), slot])
                    feats = feats @ ortho_group.rvs(feats.shape[1],
                                                    random_state=q_rng)
                chunks.append((rec.id, feats, labels, lo))
            order = rng.permutation(len(chunks))
            chunks = [chunks[i] for i in order]
            chunks.sort(key=lambda c: c[2].shape[0])  # stable: shuffle kept

            epoch_losses = []
            for batch_id in range(0, len(chunks), cfg.batch_size):
                batch = chunks[batch_id:batch_id + cfg.batch_size]
                s_batch = max(item[2].shape[0] for item in batch)
                model.zero_grad()
                batch_losses = []
                for rec_id, feats, labels, _ in batch:
                    shuffle_seed = int(rng.integers(1 << 31))
                    state = RunState(training=True, rng=rng,
                                     dropout=cfg.dropout)
                    x = Tensor(model.normalize(feats))
                    out = model.forward(x, num_speakers=s_batch, state=state,
                                        shuffle_seed=shuffle_seed)
                    lb = ls.total_loss(out.posteriors, out.existence_logits,
                                       labels, out.loss_inputs(),
                                       alpha=cfg.alpha, beta=cfg.beta)
                    batch_losses.append(float(lb.total.data))
                    (lb.total * (1.0 / len(batch))).backward()

                if not all(math.isfinite(v) for v in batch_losses):
                    dump = {"epoch": epoch,
                            "batch": batch_id // cfg.batch_size,
                            "recordings": [item[0] for item in batch],
                            "chunk_offsets": [item[3] for item in batch],
                            "losses": batch_losses}
                    dump_path = os.path.join(out_dir, "diverged.json")
                    with open(dump_path, "w") as f:
                        json.dump(dump, f, indent=2)
                    raise TrainingDiverged(
                        "non-finite loss in epoch %d batch %d "
                        "(recordings %s); dump at %s"
                        % (epoch, batch_id // cfg.batch_size,
                           dump["recordings"], dump_path))

                grads = [p.grad for p in params]
                clip_gradients(grads, cfg.grad_clip)
                lr = cfg.lr * min(1.0, (opt.step + 1)
                                  / max(1, cfg.warmup_steps))
                if cfg.lr_floor < 1.0 and opt.step >= cfg.warmup_steps:
                    span = max(1, total_steps - cfg.warmup_steps)
                    t = min(1.0, (opt.step - cfg.warmup_steps) / span)
                    lr = cfg.lr * (cfg.lr_floor + (1.0 - cfg.lr_floor)
                                   * 0.5 * (1.0 + math.cos(math.pi * t)))
                adamw_step(params, grads, opt, lr, (cfg.beta1, cfg.beta2),
                           cfg.weight_decay)
                epoch_losses.extend(batch_losses)

            train_loss = float(np.mean(epoch_losses))
            valid_loss = valid_der = None
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                valid_loss, valid_der = _evaluate(model, valid_recs, cfg)
                if valid_loss < best_loss:
                    best_loss = valid_loss
                    best_epoch = epoch
                    save_checkpoint(model, best_path)
                if epoch == cfg.epochs:
                    final_der = valid_der
            line = {"epoch": epoch, "train_loss": train_loss,
                    "valid_loss": valid_loss, "valid_der": valid_der}
            history.append(line)
            log_file.write(json.dumps(line, sort_keys=True) + "\n")
            log_file.flush()

    save_checkpoint(model, final_path)
    return TrainResult(best_path, final_path, log_path, config_path,
                       history, opt.step, best_epoch, best_loss, final_der)
