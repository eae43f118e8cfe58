"""Mono waveform container, WAV I/O and time-domain reverberation."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.io import wavfile

logger = logging.getLogger(__name__)

# above this product of lengths the FFT path is used
_DIRECT_CONV_LIMIT = 1 << 14


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples (float64, roughly in [-1, 1]) at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"Waveform must be 1-D, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Waveform samples contain NaN or Inf")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def trim(self, length: int) -> "Waveform":
        return Waveform(self.samples[:length], self.sample_rate)


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # 24-bit files are left-justified into int32 by scipy
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise ValueError(f"Unsupported WAV sample format: {data.dtype}")


def read_wav(path) -> Waveform:
    """Read a PCM or float WAV file and return its first channel.

    Integer PCM is scaled to [-1, 1). Multichannel files are reduced to
    channel 0 with a log notice.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No such WAV file: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise ValueError(f"Unsupported or malformed WAV file {path}: {exc}") from exc
    if data.ndim == 2:
        if data.shape[1] > 1:
            logger.info("%s has %d channels; using channel 0 only", path, data.shape[1])
        data = data[:, 0]
    if data.shape[0] == 0:
        raise ValueError(f"WAV file {path} contains no samples")
    return Waveform(_to_float(data), rate)


def write_wav(path, w: Waveform) -> None:
    """Write ``w`` as 16-bit PCM, clipping to [-1, 1] before quantization."""
    clipped = np.clip(w.samples, -1.0, 1.0)
    pcm = np.clip(np.round(clipped * 32768.0), -32768, 32767).astype(np.int16)
    try:
        wavfile.write(path, w.sample_rate, pcm)
    except OSError as exc:
        raise OSError(f"Cannot write WAV file {path}: {exc}") from exc


def convolve(s: Waveform, h: Waveform) -> Waveform:
    """Full linear convolution ``y = s * h`` (length ``len(s) + len(h) - 1``)."""
    if s.sample_rate != h.sample_rate:
        raise ValueError(
            f"Sample-rate mismatch: signal {s.sample_rate} Hz, filter {h.sample_rate} Hz"
        )
    if len(s) * len(h) <= _DIRECT_CONV_LIMIT:
        y = np.convolve(s.samples, h.samples, mode="full")
    else:
        y = signal.oaconvolve(s.samples, h.samples, mode="full")
    return Waveform(y, s.sample_rate)
