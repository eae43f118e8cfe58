"""Seeded speech-like test utterances.

Stand-in material for when no recorded corpus is available: words made of
syllables with a noise-burst onset and a voiced vowel (glottal pulse train
through formant resonators), separated by short pauses. Spectrally this
gives harmonic structure, formant envelopes, onsets and gaps, which is what
the magnitude-domain dereverberation models react to.
"""

from __future__ import annotations

import numpy as np
from scipy import signal

from .signal_io import Waveform

# (F1, F2, F3) in Hz for a handful of vowels
VOWELS = (
    (270, 2290, 3010), (390, 1990, 2550), (530, 1840, 2480), (660, 1720, 2410),
    (730, 1090, 2440), (570, 840, 2410), (440, 1020, 2240), (300, 870, 2240),
    (640, 1190, 2390), (490, 1350, 1690),
)
BANDWIDTHS = (80.0, 100.0, 140.0, 200.0)
F4 = 3500.0


def _resonator(x, freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    theta = 2.0 * np.pi * freq / fs
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return signal.lfilter([1.0 - r], a, x)


def _envelope(n, attack, release):
    env = np.ones(n)
    attack = min(attack, n // 2)
    release = min(release, n // 2)
    if attack:
        env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    if release:
        env[n - release:] = 0.5 + 0.5 * np.cos(np.pi * np.arange(release) / release)
    return env


def _vowel(rng, n, fs, f0_start, f0_end):
    f0 = np.linspace(f0_start, f0_end, n) * (1.0 + 0.01 * rng.standard_normal(n).cumsum() / np.sqrt(n))
    phase = np.cumsum(f0 / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    # two-pole glottal roll-off
    src = signal.lfilter([1.0], [1.0, -1.94, 0.9409], pulses)
    src += 0.02 * rng.standard_normal(n)
    formants = VOWELS[rng.integers(len(VOWELS))]
    out = np.zeros(n)
    for freq, bw in zip((*formants, F4), BANDWIDTHS):
        out += _resonator(src, freq, bw, fs)
    return out * _envelope(n, int(0.02 * fs), int(0.04 * fs))


def _burst(rng, n, fs):
    noise = rng.standard_normal(n)
    lo = rng.uniform(1500.0, 3500.0)
    b, a = signal.butter(2, [lo, min(lo + 3000.0, 0.45 * fs)], btype="band", fs=fs)
    return signal.lfilter(b, a, noise) * _envelope(n, int(0.005 * fs), int(0.02 * fs))


def synth_utterance(seed: int, duration: float = 2.5, sample_rate: int = 16000,
                    noise_db: float | None = -70.0) -> Waveform:
    """A deterministic speech-like signal of ``duration`` seconds, peak 0.5.

    A white noise floor ``noise_db`` below the peak is added (``None`` for
    none), as any recording has; without it pauses are digital silence.
    """
    rng = np.random.default_rng(seed)
    fs = sample_rate
    total = int(duration * fs)
    out = np.zeros(total)
    pos = int(rng.uniform(0.1, 0.2) * fs)
    f0_base = rng.uniform(95.0, 210.0)
    while pos < total - int(0.3 * fs):
        for _ in range(rng.integers(1, 4)):
            if rng.random() < 0.6:
                nb = int(rng.uniform(0.03, 0.08) * fs)
                seg = 0.3 * _burst(rng, nb, fs)
                end = min(pos + nb, total)
                out[pos:end] += seg[:end - pos]
                pos = end
            nv = int(rng.uniform(0.09, 0.22) * fs)
            f0a = f0_base * rng.uniform(0.85, 1.2)
            seg = _vowel(rng, nv, fs, f0a, f0a * rng.uniform(0.8, 1.1))
            seg *= rng.uniform(0.5, 1.0) / (np.max(np.abs(seg)) + 1e-12)
            end = min(pos + nv, total)
            out[pos:end] += seg[:end - pos]
            pos = end
        pos += int(rng.uniform(0.08, 0.3) * fs)
    out *= 0.5 / (np.max(np.abs(out)) + 1e-12)
    if noise_db is not None:
        out += 0.5 * 10.0 ** (noise_db / 20.0) * rng.standard_normal(total)
    return Waveform(out, fs)


def synth_corpus(n: int, seed: int = 0, duration: float = 2.5, sample_rate: int = 16000,
                 noise_db: float | None = -70.0):
    """``n`` utterances with seeds ``seed, seed + 1, ...``."""
    return [synth_utterance(seed + i, duration, sample_rate, noise_db) for i in range(n)]
