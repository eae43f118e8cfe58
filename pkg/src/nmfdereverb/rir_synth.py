"""Synthetic exponentially decaying room impulse responses and T60 measurement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_io import Waveform

DECAY_60DB = 3.0 * math.log(10.0)


@dataclass(frozen=True)
class RirSpec:
    """Target reverberation time and layout of a synthetic RIR.

    ``drr_db`` is the direct-to-reverberant energy ratio of the result.
    """

    t60: float
    sample_rate: int = 16000
    duration: float | None = None
    direct_delay: int = 0
    seed: int = 0
    drr_db: float = 0.0

    def __post_init__(self):
        if self.t60 <= 0:
            raise ValueError(f"t60 must be positive, got {self.t60}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.duration is None:
            object.__setattr__(self, "duration", float(self.t60))
        if self.duration < self.t60:
            raise ValueError(f"duration {self.duration} s is shorter than t60 {self.t60} s")
        if self.direct_delay < 0:
            raise ValueError("direct_delay must be non-negative")


def synth_rir(spec: RirSpec) -> Waveform:
    """Direct-path impulse followed by seeded Gaussian noise under ``exp(-t * 3 ln10 / t60)``.

    The amplitude envelope falls by 60 dB in energy per ``t60`` seconds. The
    tail is scaled to the requested direct-to-reverberant ratio and the
    result is peak-normalized.
    """
    fs = spec.sample_rate
    n = int(round(spec.duration * fs)) + spec.direct_delay
    h = np.zeros(n)
    h[spec.direct_delay] = 1.0
    n_tail = n - spec.direct_delay - 1
    if n_tail > 0:
        t = np.arange(1, n_tail + 1) / fs
        rng = np.random.default_rng(spec.seed)
        tail = rng.standard_normal(n_tail) * np.exp(-t * DECAY_60DB / spec.t60)
        energy = float(np.sum(tail ** 2))
        if energy > 0:
            tail *= math.sqrt(10.0 ** (-spec.drr_db / 10.0) / energy)
        h[spec.direct_delay + 1:] = tail
    return Waveform(h / np.max(np.abs(h)), fs)


def schroeder_curve(h: Waveform) -> np.ndarray:
    """Backward-integrated energy decay curve in dB (0 dB at the start)."""
    energy = np.cumsum(h.samples[::-1] ** 2)[::-1]
    if energy[0] <= 0:
        raise ValueError("impulse response is silent")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def measure_t60(h: Waveform, upper_db: float = -5.0, lower_db: float = -25.0) -> float:
    """T60 from a line fit to the Schroeder curve between ``upper_db`` and ``lower_db``."""
    edc = schroeder_curve(h)
    fit = np.isfinite(edc) & (edc <= upper_db) & (edc >= lower_db)
    if np.count_nonzero(fit) < 2 or not np.any(np.isfinite(edc) & (edc < lower_db)):
        raise ValueError(
            f"decay curve does not span {upper_db} to {lower_db} dB; cannot estimate T60"
        )
    t = np.flatnonzero(fit) / h.sample_rate
    slope, _ = np.polyfit(t, edc[fit], 1)
    if slope >= 0:
        raise ValueError("energy decay curve is not decreasing")
    return float(-60.0 / slope)
