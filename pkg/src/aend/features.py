"""Waveform to stacked log-mel features.

Pipeline: magnitude STFT -> triangular mel filterbank -> log with floor,
then stacking of consecutive mel frames into wide context vectors. At the
default settings (8 kHz, 23 mels, 10 ms hop, stack 15 frames every 10)
each output row is 345-dimensional and represents 100 ms of audio.
"""

import wave as _wave
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensorio import read_tensors, write_tensors
from .tolerances import LOG_MEL_FLOOR


@dataclass
class MelSpec:
    """STFT / mel filterbank configuration."""

    sample_rate: int = 8000
    n_mels: int = 23
    window_ms: float = 10.0
    hop_ms: float = 10.0
    fft_size: Optional[int] = None  # next power of two >= window samples
    fmin: float = 0.0
    fmax: Optional[float] = None  # defaults to Nyquist

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1, got %d" % self.n_mels)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("window_ms and hop_ms must be positive")
        if self.fmax is None:
            self.fmax = self.sample_rate / 2.0
        if not self.fmin < self.fmax <= self.sample_rate / 2.0:
            raise ValueError(
                "need fmin < fmax <= sample_rate/2, got fmin=%g fmax=%g sr=%d"
                % (self.fmin, self.fmax, self.sample_rate)
            )
        if self.fft_size is None:
            n = 1
            while n < self.window_samples:
                n *= 2
            self.fft_size = n
        if self.fft_size < self.window_samples:
            raise ValueError("fft_size smaller than the analysis window")

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))


@dataclass
class FrameStack:
    """Stacking of mel frames into context windows."""

    context: int = 15
    hop: int = 10

    def __post_init__(self):
        if self.context < 1 or self.hop < 1:
            raise ValueError("context and hop must be >= 1")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(spec: MelSpec) -> np.ndarray:
    """n_mels + 2 edge frequencies in Hz, equally spaced on the mel scale."""
    mels = np.linspace(hz_to_mel(spec.fmin), hz_to_mel(spec.fmax), spec.n_mels + 2)
    return mel_to_hz(mels)


def mel_band_centers(spec: MelSpec) -> np.ndarray:
    """Center frequency in Hz of each triangular filter."""
    return mel_band_edges(spec)[1:-1]


def mel_filterbank(spec: MelSpec) -> np.ndarray:
    """Triangular filterbank, shape (n_mels, fft_size//2 + 1)."""
    edges = mel_band_edges(spec)
    bins = np.arange(spec.fft_size // 2 + 1) * spec.sample_rate / spec.fft_size
    fb = np.zeros((spec.n_mels, bins.size))
    for m in range(spec.n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bins - lo) / (mid - lo)
        down = (hi - bins) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def frame_count(num_samples: int, spec: MelSpec) -> int:
    """Frames fully contained in the signal, hop apart, each spanning fft_size samples."""
    return (num_samples - spec.fft_size) // spec.hop_samples + 1


def log_mel(wave: np.ndarray, spec: Optional[MelSpec] = None) -> np.ndarray:
    """Log mel spectrogram of a mono waveform, shape (F, n_mels).

    Each analysis frame spans fft_size consecutive samples so every frame
    is fully inside the signal: F = (len - fft_size)//hop + 1.
    """
    if spec is None:
        spec = MelSpec()
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1:
        raise ValueError("expected a mono waveform, got shape %r" % (wave.shape,))
    if wave.size < spec.fft_size:
        raise ValueError(
            "waveform too short for one analysis frame: %d samples < %d"
            % (wave.size, spec.fft_size)
        )
    n_frames = frame_count(wave.size, spec)
    hop = spec.hop_samples
    frames = np.stack(
        [wave[t * hop : t * hop + spec.fft_size] for t in range(n_frames)]
    )
    mag = np.abs(np.fft.rfft(frames, axis=1))
    mel = mag @ mel_filterbank(spec).T
    return np.log(mel + LOG_MEL_FLOOR)


def stack_frames(mel: np.ndarray, cfg: Optional[FrameStack] = None) -> np.ndarray:
    """Concatenate `context` consecutive mel rows every `hop` rows.

    Pure gather: output row t is mel[t*hop : t*hop + context] flattened,
    so T = (F - context)//hop + 1 and the width is context * n_mels.
    """
    if cfg is None:
        cfg = FrameStack()
    mel = np.asarray(mel)
    if mel.ndim != 2:
        raise ValueError("expected a 2-d mel matrix, got shape %r" % (mel.shape,))
    n_frames = mel.shape[0]
    if n_frames < cfg.context:
        raise ValueError(
            "too few mel frames to stack: %d < context %d" % (n_frames, cfg.context)
        )
    n_out = (n_frames - cfg.context) // cfg.hop + 1
    return np.stack(
        [mel[t * cfg.hop : t * cfg.hop + cfg.context].reshape(-1) for t in range(n_out)]
    )


def wave_to_stacked(
    wave: np.ndarray,
    spec: Optional[MelSpec] = None,
    stack: Optional[FrameStack] = None,
) -> np.ndarray:
    """Full pipeline: waveform -> log mel -> stacked context rows."""
    return stack_frames(log_mel(wave, spec), stack)


def normalize(feats: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Per-dimension standardization with a floor against zero variance."""
    return (feats - mean) / np.maximum(std, 1e-8)


def read_wav(path) -> tuple:
    """Read 16-bit signed mono PCM. Returns (samples in [-1, 1), sample_rate)."""
    with _wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError("%s: expected mono, got %d channels" % (path, w.getnchannels()))
        if w.getsampwidth() != 2:
            raise ValueError("%s: expected 16-bit samples" % path)
        raw = w.readframes(w.getnframes())
        rate = w.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path, samples: np.ndarray, sample_rate: int):
    """Write float samples as 16-bit signed mono PCM, clipping to range."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 32767.0 / 32768.0)
    ints = np.round(clipped * 32768.0).astype("<i2")
    with _wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(ints.tobytes())


def read_raw_f32(path) -> np.ndarray:
    """Read a headerless little-endian fp32 sample file."""
    return np.fromfile(str(path), dtype="<f4").astype(np.float64)


def write_raw_f32(path, samples: np.ndarray):
    np.asarray(samples).astype("<f4").tofile(str(path))


def save_features(path, feats: np.ndarray):
    """Write a feature matrix in the named-tensor binary format."""
    write_tensors(path, {"features": feats})


def load_features(path) -> np.ndarray:
    tensors = read_tensors(path)
    if "features" not in tensors:
        raise ValueError("%s: no 'features' tensor" % path)
    return tensors["features"].astype(np.float64)
