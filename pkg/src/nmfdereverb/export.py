"""CSV dumps of matrices and cost traces for plotting."""

from __future__ import annotations

import csv

import numpy as np


def save_matrix_csv(path, M, db: bool = False, floor: float = 1e-12) -> None:
    """One CSV row per matrix row (frequency bin / component).

    With ``db`` the values are written as ``20 log10(max(M, floor))``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if db:
        M = 20.0 * np.log10(np.maximum(M, floor))
    np.savetxt(path, M, delimiter=",", fmt="%.10g")


def load_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def save_trace_csv(path, trace) -> None:
    """``iteration,cost`` rows; iteration 0 is the cost at initialization."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "cost"])
        for i, c in enumerate(trace):
            writer.writerow([i, repr(float(c))])
