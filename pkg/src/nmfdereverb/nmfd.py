"""Non-negative matrix factor deconvolution of a reverberant magnitude spectrogram.

Each frequency row of the reverberant spectrogram ``Y`` is modelled as the
causal convolution of a clean row ``X_k`` with a short non-negative filter
``H_k`` (``L`` frames, unit sum). ``X`` and ``H`` are estimated with
multiplicative updates on a squared error plus an L1 penalty on ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nmf_core import _check_data, floor_eps
from .signal_io import Waveform
from .spectrogram import StftConfig, default_config, process_magnitude

DEFAULT_FILTER_LEN = 11
DEFAULT_ITERS = 20
SPARSITY_SCALE = 1e-8


def default_sparsity(Y) -> float:
    """Default L1 weight: total magnitude of ``Y`` times 1e-8."""
    return float(np.sum(Y)) * SPARSITY_SCALE


def linear_decay_filter(K: int, L: int) -> np.ndarray:
    """``H[k, tau] = (L - tau) / sum(1..L)`` for every row; rows sum to one."""
    taps = np.arange(L, 0, -1, dtype=np.float64)
    return np.tile(taps / taps.sum(), (K, 1))


@dataclass
class SubbandFilter:
    """Per-row non-negative smearing filters, rows normalized to unit sum."""

    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.float64)
        if H.ndim != 2:
            raise ValueError(f"filter matrix must be 2-D, got shape {H.shape}")
        if np.any(H < 0):
            raise ValueError("filter taps must be non-negative")
        if not np.allclose(H.sum(axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("filter rows must sum to one")
        self.H = H

    @property
    def L(self) -> int:
        return self.H.shape[1]


@dataclass
class NmfdResult:
    X: np.ndarray
    H: SubbandFilter
    cost_trace: list = field(default_factory=list)


def subband_convolve(X, H) -> np.ndarray:
    """``Y'[k, n] = sum_tau X[k, n - tau] H[k, tau]``, causal and truncated to N frames."""
    H = H.H if isinstance(H, SubbandFilter) else np.asarray(H, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    N = X.shape[1]
    out = np.zeros_like(X)
    for tau in range(min(H.shape[1], N)):
        out[:, tau:] += H[:, tau, None] * X[:, :N - tau]
    return out


def correlate_rows(H: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`subband_convolve` in ``X``: ``sum_tau H[k, tau] Z[k, m + tau]``."""
    N = Z.shape[1]
    out = np.zeros_like(Z)
    for tau in range(min(H.shape[1], N)):
        out[:, :N - tau] += H[:, tau, None] * Z[:, tau:]
    return out


def lagged_products(X: np.ndarray, Z: np.ndarray, L: int) -> np.ndarray:
    """Adjoint of :func:`subband_convolve` in ``H``: ``sum_n X[k, n - tau] Z[k, n]``."""
    N = X.shape[1]
    out = np.zeros((X.shape[0], L))
    for tau in range(min(L, N)):
        out[:, tau] = np.sum(X[:, :N - tau] * Z[:, tau:], axis=1)
    return out


def nmfd_cost(Y, X, H, lam: float) -> float:
    """Squared error of the sub-band model plus ``2 * lam * sum|X|``."""
    resid = np.asarray(Y, dtype=np.float64) - subband_convolve(X, H)
    return float(np.sum(resid ** 2) + 2.0 * lam * np.sum(np.abs(X)))


def _check_args(Y, L, lam, iters):
    Y = _check_data(Y)
    if L < 1:
        raise ValueError(f"filter length must be >= 1, got {L}")
    if L > Y.shape[1]:
        raise ValueError(f"filter length L={L} exceeds the number of frames N={Y.shape[1]}")
    if lam is not None and lam < 0:
        raise ValueError(f"sparsity weight must be non-negative, got {lam}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    return Y


def nmfd_step(Y, X, H, lam, eps, shared_filter=False):
    """One round of the X update, the H update and row renormalization.

    Renormalizing ``H`` rows rescales the matching rows of ``X`` so the
    modelled spectrogram is unchanged by the normalization. With
    ``shared_filter`` a single filter is fitted to all rows.
    """
    L = H.shape[1]
    Yp = subband_convolve(X, H)
    X = np.maximum(X * correlate_rows(H, Y) / (correlate_rows(H, Yp) + lam + eps), eps)

    Yp = subband_convolve(X, H)
    num = lagged_products(X, Y, L)
    den = lagged_products(X, Yp, L)
    if shared_filter:
        num = np.broadcast_to(num.sum(axis=0), num.shape)
        den = np.broadcast_to(den.sum(axis=0), den.shape)
    H = np.maximum(H * num / (den + eps), eps)

    scale = H.sum(axis=1)
    H = H / scale[:, None]
    X = X * scale[:, None]
    return X, H


def nmfd(Y, L: int = DEFAULT_FILTER_LEN, lam: float | None = None,
         iters: int = DEFAULT_ITERS, shared_filter: bool = False,
         callback=None) -> NmfdResult:
    """Estimate a clean spectrogram ``X`` and sub-band filters from ``Y``.

    ``X`` starts equal to ``Y`` and every filter starts as a linear decay.
    ``lam`` defaults to ``sum(Y) * 1e-8``.

    ``callback(iteration, X, H)`` is invoked after every round.
    """
    Y = _check_args(Y, L, lam, iters)
    if lam is None:
        lam = default_sparsity(Y)
    eps = floor_eps(Y)
    X = np.maximum(Y.copy(), eps)
    H = linear_decay_filter(Y.shape[0], L)
    trace = [nmfd_cost(Y, X, H, lam)]
    for it in range(1, iters + 1):
        X, H = nmfd_step(Y, X, H, lam, eps, shared_filter)
        trace.append(nmfd_cost(Y, X, H, lam))
        if callback is not None:
            callback(it, X, H)
    return NmfdResult(X, SubbandFilter(H), trace)


def dereverb_nmfd(y: Waveform, cfg: StftConfig | None = None, L: int = DEFAULT_FILTER_LEN,
                  lam: float | None = None, iters: int = DEFAULT_ITERS) -> Waveform:
    """Dereverberate ``y`` with NMFD on its magnitude, resynthesized with the reverberant phase."""
    cfg = cfg or default_config(y.sample_rate)
    return process_magnitude(y, cfg, lambda Y: nmfd(Y, L=L, lam=lam, iters=iters).X)
