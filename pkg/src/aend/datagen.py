"""Synthetic multi-speaker corpus generation.

Two synthesis levels share the same activity scripts:
  - feature level (default): each speaker is a fixed 345-d voiceprint,
    active speakers add, every frame gets Gaussian measurement noise plus
    a per-recording background noise floor drawn from an SNR range.
  - waveform level: each speaker is a bank of sinusoids gated by the
    activity script, mixed at 8 kHz and pushed through the log-mel
    feature pipeline end to end.

A corpus is a directory with train/valid/test subdirs (disjoint id
ranges), a line-delimited manifest per split, raw 0/1 label files, and a
meta.json holding the exact config, normalization stats from the train
split, and recomputed overlap ratios.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import features as ft

FEATURE_DIM = 345

# rng stream labels so each consumer has an independent deterministic stream
_STREAM_ACTIVITY = 1
_STREAM_FEATURES = 2
_STREAM_VOICEPRINTS = 3
_STREAM_RECORDING = 4


@dataclass
class ActivityScript:
    """Ground-truth speech activity for one recording."""

    num_speakers: int
    num_frames: int
    activity: np.ndarray  # S x T of 0/1
    seed: int


@dataclass
class VoiceprintModel:
    """Per-speaker mean feature vectors; overlap is additive."""

    voiceprints: np.ndarray  # S x dim
    noise_std: float


def gen_activity(num_speakers: int, num_frames: int, p_on: float, p_off: float,
                 seed: int) -> ActivityScript:
    """Independent per-speaker on/off Markov chains.

    p_on is the off->on transition probability, p_off the on->off one;
    the initial state is drawn from the steady state, so the expected
    on-fraction is p_on/(p_on+p_off). Rows with no active frame are
    redrawn so every speaker speaks at least once.
    """
    if num_speakers < 1 or num_frames < 1:
        raise ValueError("need at least one speaker and one frame")
    if not (0.0 < p_on <= 1.0 and 0.0 < p_off < 1.0):
        raise ValueError("transition probabilities out of range")
    rng = np.random.default_rng([seed, _STREAM_ACTIVITY])
    p_start = p_on / (p_on + p_off)
    rows = []
    for _ in range(num_speakers):
        while True:
            u = rng.random(num_frames)
            row = np.zeros(num_frames, dtype=np.uint8)
            state = 1 if u[0] < p_start else 0
            row[0] = state
            for t in range(1, num_frames):
                if state == 1:
                    state = 0 if u[t] < p_off else 1
                else:
                    state = 1 if u[t] < p_on else 0
                row[t] = state
            if row.any():
                rows.append(row)
                break
    return ActivityScript(num_speakers, num_frames, np.stack(rows), seed)


def gen_voiceprints(num_speakers: int, dim: int = FEATURE_DIM,
                    noise_std: float = 0.5, seed: int = 0,
                    scale: float = 1.0, max_tries: int = 100) -> VoiceprintModel:
    """Random voiceprints with enforced pairwise separation > 4*noise_std."""
    if noise_std <= 0:
        raise ValueError("noise_std must be positive")
    rng = np.random.default_rng([seed, _STREAM_VOICEPRINTS])
    for _ in range(max_tries):
        vp = rng.normal(scale=scale, size=(num_speakers, dim))
        if num_speakers < 2:
            return VoiceprintModel(vp, noise_std)
        diffs = vp[:, None, :] - vp[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(axis=2))
        dist[np.diag_indices(num_speakers)] = np.inf
        if dist.min() > 4.0 * noise_std:
            return VoiceprintModel(vp, noise_std)
    raise ValueError(
        "could not separate %d voiceprints beyond 4*noise_std=%g in %d tries"
        % (num_speakers, 4.0 * noise_std, max_tries)
    )


def gen_features(script: ActivityScript, model: VoiceprintModel,
                 background_std: float = 0.0) -> np.ndarray:
    """Frame t = sum of active voiceprints + per-dim Gaussian noise.

    Silent frames are pure noise. `background_std` adds the recording-wide
    noise floor on top of the per-frame measurement noise.
    """
    if script.num_speakers != model.voiceprints.shape[0]:
        raise ValueError("script/model speaker count mismatch")
    rng = np.random.default_rng([script.seed, _STREAM_FEATURES])
    clean = script.activity.astype(np.float64).T @ model.voiceprints
    noisy = clean + rng.normal(scale=model.noise_std, size=clean.shape)
    if background_std > 0:
        noisy = noisy + rng.normal(scale=background_std, size=clean.shape)
    return noisy


def background_std_for_snr(clean: np.ndarray, snr_db: float) -> float:
    """Noise std giving the requested SNR against the clean signal RMS."""
    rms = float(np.sqrt(np.mean(clean ** 2)))
    return rms * 10.0 ** (-snr_db / 20.0)


# ------------------------------------------------------------ waveform mode

@dataclass
class SinusoidBank:
    """A speaker's voice at waveform level: a sum of fixed sinusoids."""

    freqs: np.ndarray
    amps: np.ndarray
    phases: np.ndarray

    def render(self, t: np.ndarray) -> np.ndarray:
        out = np.zeros_like(t)
        for f, a, p in zip(self.freqs, self.amps, self.phases):
            out += a * np.sin(2 * np.pi * f * t + p)
        return out


def gen_sinusoid_banks(num_speakers: int, seed: int, sample_rate: int = 8000,
                       tones: int = 4) -> list:
    """Per-speaker banks with disjoint frequency bands so speakers differ."""
    rng = np.random.default_rng([seed, _STREAM_VOICEPRINTS])
    lo, hi = 200.0, sample_rate / 2.0 * 0.85
    edges = np.linspace(lo, hi, num_speakers + 1)
    banks = []
    for s in range(num_speakers):
        freqs = rng.uniform(edges[s], edges[s + 1], size=tones)
        amps = rng.uniform(0.1, 0.3, size=tones)
        phases = rng.uniform(0, 2 * np.pi, size=tones)
        banks.append(SinusoidBank(freqs, amps, phases))
    return banks


def samples_for_frames(num_frames: int, spec: ft.MelSpec,
                       stack: ft.FrameStack) -> int:
    """Waveform length whose feature pipeline yields exactly num_frames rows."""
    mel_needed = (num_frames - 1) * stack.hop + stack.context
    return (mel_needed - 1) * spec.hop_samples + spec.fft_size


def gen_waveform(script: ActivityScript, banks: list, snr_db: float,
                 spec: Optional[ft.MelSpec] = None,
                 stack: Optional[ft.FrameStack] = None) -> np.ndarray:
    """Mix gated sinusoid banks plus Gaussian noise at the requested SNR.

    Sample s belongs to activity slot floor(s / slot_samples) where a slot
    is one stacked frame (100 ms at defaults); the same slot indexing is
    used for the labels, so labels and features share one time base.
    """
    if spec is None:
        spec = ft.MelSpec()
    if stack is None:
        stack = ft.FrameStack()
    n = samples_for_frames(script.num_frames, spec, stack)
    slot_samples = spec.hop_samples * stack.hop
    t = np.arange(n) / spec.sample_rate
    slot = np.minimum(np.arange(n) // slot_samples, script.num_frames - 1)
    clean = np.zeros(n)
    for s, bank in enumerate(banks):
        gate = script.activity[s][slot].astype(np.float64)
        clean += gate * bank.render(t)
    rng = np.random.default_rng([script.seed, _STREAM_FEATURES])
    noise_std = max(background_std_for_snr(clean, snr_db), 1e-6)
    return clean + rng.normal(scale=noise_std, size=n)


# ------------------------------------------------------------------- corpus

@dataclass
class CorpusConfig:
    """Recording counts per split keyed by speaker count, plus synthesis knobs."""

    train_counts: Dict[int, int] = field(default_factory=lambda: {1: 20, 2: 20, 3: 20})
    valid_counts: Dict[int, int] = field(default_factory=lambda: {1: 4, 2: 3, 3: 3})
    test_counts: Dict[int, int] = field(default_factory=lambda: {1: 4, 2: 3, 3: 3})
    frames_min: int = 500
    frames_max: int = 500
    # mean utterance 2 s, on-fraction 2/7 per speaker: long enough that
    # median smoothing keeps real speech and counting has evidence
    p_on: float = 0.02
    p_off: float = 0.05
    noise_std: float = 0.5
    snr_db_range: Tuple[float, float] = (5.0, 20.0)
    mode: str = "feature"  # or "waveform"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("feature", "waveform"):
            raise ValueError("mode must be feature or waveform")
        if self.frames_min < 1 or self.frames_max < self.frames_min:
            raise ValueError("bad frame range")


# id bases keep split seed ranges disjoint
_SPLIT_BASE = {"train": 0, "valid": 1_000_000, "test": 2_000_000}
SPLITS = ("train", "valid", "test")


def _split_counts(cfg: CorpusConfig, split: str) -> Dict[int, int]:
    return {"train": cfg.train_counts, "valid": cfg.valid_counts,
            "test": cfg.test_counts}[split]


def gen_recording(cfg: CorpusConfig, recording_id: int, num_speakers: int):
    """One recording: (features T x 345, labels S x T, wave or None)."""
    rng = np.random.default_rng([cfg.seed, _STREAM_RECORDING, recording_id])
    num_frames = int(rng.integers(cfg.frames_min, cfg.frames_max + 1))
    snr_db = float(rng.uniform(*cfg.snr_db_range))
    script_seed = int(rng.integers(0, 2 ** 62))
    script = gen_activity(num_speakers, num_frames, cfg.p_on, cfg.p_off,
                          script_seed)
    if cfg.mode == "feature":
        model = gen_voiceprints(num_speakers, noise_std=cfg.noise_std,
                                seed=script_seed)
        clean = script.activity.astype(np.float64).T @ model.voiceprints
        feats = gen_features(script, model,
                             background_std=background_std_for_snr(clean, snr_db))
        return feats, script.activity, None
    banks = gen_sinusoid_banks(num_speakers, script_seed)
    wave = gen_waveform(script, banks, snr_db)
    feats = ft.wave_to_stacked(wave)
    if feats.shape[0] != num_frames:
        raise AssertionError("waveform length does not map back to %d frames"
                             % num_frames)
    return feats, script.activity, wave


def overlap_ratio(label_list) -> float:
    """Fraction of speech frames with two or more active speakers."""
    speech = 0
    overlapped = 0
    for labels in label_list:
        counts = labels.sum(axis=0)
        speech += int((counts >= 1).sum())
        overlapped += int((counts >= 2).sum())
    return overlapped / speech if speech else 0.0


def _config_dict(cfg: CorpusConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for key in ("train_counts", "valid_counts", "test_counts"):
        d[key] = {str(k): v for k, v in sorted(d[key].items())}
    d["snr_db_range"] = list(d["snr_db_range"])
    return d


def gen_corpus(cfg: CorpusConfig, out_dir) -> dict:
    """Write a full corpus directory; returns the meta dict."""
    out_dir = str(out_dir)
    parent = os.path.dirname(os.path.abspath(out_dir))
    if not os.path.isdir(parent):
        raise FileNotFoundError("parent directory does not exist: %s" % parent)
    os.makedirs(out_dir, exist_ok=True)
    split_labels = {}
    for split in SPLITS:
        split_dir = os.path.join(out_dir, split)
        os.makedirs(split_dir, exist_ok=True)
        counts = _split_counts(cfg, split)
        entries = []
        labels_acc = []
        rid = _SPLIT_BASE[split]
        feats_acc = []
        for num_speakers in sorted(counts):
            for _ in range(counts[num_speakers]):
                feats, labels, wave = gen_recording(cfg, rid, num_speakers)
                name = "r%07d" % rid
                feat_path = os.path.join(split_dir, name + ".feat")
                label_path = os.path.join(split_dir, name + ".labels")
                ft.save_features(feat_path, feats)
                with open(label_path, "wb") as f:
                    f.write(labels.astype(np.uint8).tobytes())
                if wave is not None:
                    ft.write_wav(os.path.join(split_dir, name + ".wav"),
                                 wave, 8000)
                entries.append({
                    "id": name,
                    "features": name + ".feat",
                    "labels": name + ".labels",
                    "num_speakers": int(labels.shape[0]),
                    "num_frames": int(labels.shape[1]),
                })
                labels_acc.append(labels)
                if split == "train":
                    feats_acc.append(feats)
                rid += 1
        with open(os.path.join(split_dir, "manifest.jsonl"), "w") as f:
            for entry in entries:
                f.write(json.dumps(entry, sort_keys=True) + "\n")
        split_labels[split] = labels_acc
        if split == "train":
            stacked = np.concatenate(feats_acc, axis=0)
            train_mean = stacked.mean(axis=0)
            train_std = stacked.std(axis=0)
    meta = {
        "config": _config_dict(cfg),
        "feature_mean": [float(v) for v in train_mean],
        "feature_std": [float(v) for v in train_std],
        "overlap_ratio": {s: overlap_ratio(split_labels[s]) for s in SPLITS},
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=2)
        f.write("\n")
    return meta


@dataclass
class Recording:
    """One loaded recording: features in memory, labels as 0/1."""

    id: str
    features: np.ndarray
    labels: np.ndarray

    @property
    def num_speakers(self) -> int:
        return self.labels.shape[0]

    @property
    def num_frames(self) -> int:
        return self.labels.shape[1]


def load_split(corpus_dir, split: str) -> list:
    """Load every recording of a split eagerly."""
    split_dir = os.path.join(str(corpus_dir), split)
    manifest = os.path.join(split_dir, "manifest.jsonl")
    if not os.path.isfile(manifest):
        raise FileNotFoundError("no manifest at %s" % manifest)
    out = []
    with open(manifest) as f:
        for line in f:
            entry = json.loads(line)
            feats = ft.load_features(os.path.join(split_dir, entry["features"]))
            with open(os.path.join(split_dir, entry["labels"]), "rb") as lf:
                raw = np.frombuffer(lf.read(), dtype=np.uint8)
            labels = raw.reshape(entry["num_speakers"], entry["num_frames"])
            if feats.shape[0] != entry["num_frames"]:
                raise ValueError("%s: feature/label frame mismatch" % entry["id"])
            out.append(Recording(entry["id"], feats, labels))
    return out


def load_meta(corpus_dir) -> dict:
    with open(os.path.join(str(corpus_dir), "meta.json")) as f:
        return json.load(f)
