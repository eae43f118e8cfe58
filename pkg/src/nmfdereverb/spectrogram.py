"""STFT analysis/synthesis and magnitude/phase handling.

Frames are taken at ``n * hop`` with no padding at either end, so the
tail of a signal that does not fill a whole window is dropped and the
inverse transform can be shorter than the input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .signal_io import Waveform

logger = logging.getLogger(__name__)

WINDOW_KINDS = ("sqrt-hann", "hann")
COLA_TOLERANCE = 1e-6


def _periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def overlap_add_profile(window: np.ndarray, hop: int) -> np.ndarray:
    """Sum of ``window`` shifted by multiples of ``hop``, over one hop period."""
    profile = np.zeros(hop)
    for start in range(0, window.shape[0], hop):
        seg = window[start:start + hop]
        profile[:seg.shape[0]] += seg
    return profile


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 1024
    hop: int = 256
    fft_size: int = 1024
    sample_rate: int = 16000
    window_kind: str = "sqrt-hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.window_len <= self.fft_size:
            raise ValueError(
                "need 0 < hop <= window_len <= fft_size, got "
                f"hop={self.hop}, window_len={self.window_len}, fft_size={self.fft_size}"
            )
        if self.fft_size % 2:
            raise ValueError(f"fft_size must be even, got {self.fft_size}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.window_kind not in WINDOW_KINDS:
            raise ValueError(f"window_kind must be one of {WINDOW_KINDS}")
        if self.window_kind == "sqrt-hann" and self.cola_deviation() > COLA_TOLERANCE:
            raise ValueError(
                f"sqrt-hann window of {self.window_len} samples with hop {self.hop} "
                "violates constant overlap-add"
            )

    @classmethod
    def from_ms(cls, window_ms=64.0, hop_ms=16.0, sample_rate=16000,
                window_kind="sqrt-hann", fft_size=None):
        window_len = int(round(window_ms * sample_rate / 1000.0))
        hop = int(round(hop_ms * sample_rate / 1000.0))
        return cls(window_len, hop, fft_size or window_len, sample_rate, window_kind)

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def hop_seconds(self) -> float:
        return self.hop / self.sample_rate

    def window(self) -> np.ndarray:
        w = _periodic_hann(self.window_len)
        return np.sqrt(w) if self.window_kind == "sqrt-hann" else w

    def cola_profile(self) -> np.ndarray:
        w = self.window()
        return overlap_add_profile(w * w, self.hop)

    def cola_constant(self) -> float:
        return float(np.mean(self.cola_profile()))

    def cola_deviation(self) -> float:
        """Max relative deviation of the analysis*synthesis overlap-add from its mean."""
        profile = self.cola_profile()
        mean = profile.mean()
        return float(np.max(np.abs(profile - mean)) / mean)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.hop + 1

    def frames_to_ms(self, frames: int) -> float:
        return 1000.0 * frames * self.hop / self.sample_rate


def default_config(sample_rate: int = 16000) -> StftConfig:
    """64 ms sqrt-hann window with a 16 ms hop."""
    return StftConfig.from_ms(64.0, 16.0, sample_rate, "sqrt-hann")


def demo_config(sample_rate: int = 16000) -> StftConfig:
    """Hann window of 1024 samples with 756 samples of overlap, FFT size 1024."""
    return StftConfig(1024, 1024 - 756, 1024, sample_rate, "hann")


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray
    config: StftConfig

    def __post_init__(self):
        if self.bins.ndim != 2 or self.bins.shape[0] != self.config.n_bins:
            raise ValueError(
                f"expected {self.config.n_bins} frequency bins, got array of shape {self.bins.shape}"
            )

    @property
    def shape(self):
        return self.bins.shape


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    mag: np.ndarray
    config: StftConfig

    def __post_init__(self):
        mag = np.asarray(self.mag, dtype=np.float64)
        if mag.ndim != 2 or mag.shape[0] != self.config.n_bins:
            raise ValueError(
                f"expected {self.config.n_bins} frequency bins, got array of shape {mag.shape}"
            )
        if not np.all(np.isfinite(mag)) or np.any(mag < 0):
            raise ValueError("magnitude spectrogram must be finite and non-negative")
        object.__setattr__(self, "mag", mag)

    @property
    def shape(self):
        return self.mag.shape


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    """Short-time Fourier transform, one column per full frame."""
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(f"signal is {w.sample_rate} Hz but config expects {cfg.sample_rate} Hz")
    n_frames = cfg.n_frames(len(w))
    if n_frames == 0:
        raise ValueError(
            f"signal of {len(w)} samples is shorter than one window ({cfg.window_len})"
        )
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = w.samples[idx] * cfg.window()[None, :]
    bins = np.fft.rfft(frames, n=cfg.fft_size, axis=1).T
    return ComplexSpectrogram(bins, cfg)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window equals the analysis window and the result is divided
    by the overlap-add constant of their product.
    """
    cfg = spec.config
    n_frames = spec.bins.shape[1]
    if cfg.cola_deviation() > COLA_TOLERANCE:
        logger.warning("window/hop pair is not COLA; resynthesis will have ripple")
    frames = np.fft.irfft(spec.bins.T, n=cfg.fft_size, axis=1)[:, :cfg.window_len]
    frames *= cfg.window()[None, :]
    out = np.zeros((n_frames - 1) * cfg.hop + cfg.window_len)
    for n in range(n_frames):
        out[n * cfg.hop:n * cfg.hop + cfg.window_len] += frames[n]
    out /= cfg.cola_constant()
    return Waveform(out, cfg.sample_rate)


def split(spec: ComplexSpectrogram) -> tuple[MagnitudeSpectrogram, np.ndarray]:
    return MagnitudeSpectrogram(np.abs(spec.bins), spec.config), np.angle(spec.bins)


def recombine(mag: MagnitudeSpectrogram, phase: np.ndarray) -> ComplexSpectrogram:
    if mag.shape != phase.shape:
        raise ValueError(f"shape mismatch: magnitude {mag.shape} vs phase {phase.shape}")
    return ComplexSpectrogram(mag.mag * np.exp(1j * phase), mag.config)


def process_magnitude(w: Waveform, cfg: StftConfig,
                      fn: Callable[[np.ndarray], np.ndarray]) -> Waveform:
    """Run ``fn`` on the magnitude spectrogram of ``w`` and resynthesize.

    The reverberant phase is reused for the enhanced magnitude. The output is
    zero-padded to the input length (samples past the last full frame are
    not resynthesized).
    """
    mag, phase = split(stft(w, cfg))
    enhanced = np.asarray(fn(mag.mag), dtype=np.float64)
    out = istft(recombine(MagnitudeSpectrogram(enhanced, cfg), phase)).samples
    return Waveform(np.pad(out, (0, len(w) - out.shape[0])), w.sample_rate)
