"""Cepstral distortion and import of externally computed PESQ scores."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .signal_io import Waveform
from .spectrogram import StftConfig, default_config

N_CEPSTRA = 12
GATE_DB = -60.0
# log-magnitude floor relative to the signal's peak bin (-160 dB)
_MAG_FLOOR = 1e-8
CD_SCALE = 10.0 / math.log(10.0)


@dataclass
class MetricReport:
    cd_in: float
    cd_out: float
    t60_label: str = ""
    pesq_in: float | None = None
    pesq_out: float | None = None

    @property
    def cd_db(self) -> float:
        return self.cd_out

    @property
    def cd_improvement_db(self) -> float:
        return self.cd_in - self.cd_out

    @property
    def pesq_improvement(self) -> float | None:
        if self.pesq_in is None or self.pesq_out is None:
            return None
        return self.pesq_out - self.pesq_in


def _frames(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n = cfg.n_frames(x.shape[0])
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n)[:, None]
    return x[idx] * cfg.window()[None, :]


def frame_cepstra(x: np.ndarray, cfg: StftConfig, n_cep: int = N_CEPSTRA):
    """Real cepstra ``c_1..c_n_cep`` per frame and the frame energies."""
    frames = _frames(x, cfg)
    mag = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    floor = _MAG_FLOOR * max(float(mag.max()), np.finfo(np.float64).tiny)
    cep = np.fft.irfft(np.log(np.maximum(mag, floor)), n=cfg.fft_size, axis=1)
    return cep[:, 1:n_cep + 1], np.sum(frames ** 2, axis=1)


def cepstral_distortion(ref: Waveform, test: Waveform, cfg: StftConfig | None = None,
                        n_cep: int = N_CEPSTRA, gate_db: float = GATE_DB) -> float:
    """Mean framewise cepstral distance in dB.

    ``CD = (10 / ln 10) * sqrt(2 * sum_{i=1..n_cep} (c_i - c'_i)^2)``, averaged
    over frames whose energy is within ``gate_db`` of the peak frame energy in
    both signals. ``c_0`` is excluded, so the measure ignores overall gain.
    Signals are compared over their common length.
    """
    if ref.sample_rate != test.sample_rate:
        raise ValueError(f"sample-rate mismatch: {ref.sample_rate} vs {test.sample_rate}")
    cfg = cfg or default_config(ref.sample_rate)
    n = min(len(ref), len(test))
    if n < cfg.window_len:
        raise ValueError("signals are shorter than one analysis frame")
    c_ref, e_ref = frame_cepstra(ref.samples[:n], cfg, n_cep)
    c_test, e_test = frame_cepstra(test.samples[:n], cfg, n_cep)
    gate = 10.0 ** (gate_db / 10.0)
    keep = (e_ref > gate * e_ref.max()) & (e_test > gate * e_test.max())
    if not np.any(keep):
        raise ValueError("every frame fell below the energy gate")
    dist = CD_SCALE * np.sqrt(2.0 * np.sum((c_ref[keep] - c_test[keep]) ** 2, axis=1))
    return float(np.mean(dist))


def _optional_float(text):
    text = (text or "").strip()
    return float(text) if text else None


def import_pesq(path) -> dict:
    """Read ``id,pesq_in,pesq_out`` rows into ``{id: (pesq_in, pesq_out)}``.

    Blank cells become ``None``; duplicate ids raise ``ValueError``.
    """
    scores = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != \
                ["id", "pesq_in", "pesq_out"]:
            raise ValueError(f"{path}: expected header 'id,pesq_in,pesq_out'")
        for line, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise ValueError(f"{path}:{line}: wrong number of fields")
            key = row["id"].strip()
            if key in scores:
                raise ValueError(f"{path}:{line}: duplicate id {key!r}")
            try:
                scores[key] = (_optional_float(row["pesq_in"]), _optional_float(row["pesq_out"]))
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
    return scores
