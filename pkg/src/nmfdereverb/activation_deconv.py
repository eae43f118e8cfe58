"""Dereverberation by deconvolving NMF activations.

The reverberant magnitude is factored as ``Y ~ W @ A_reverb``; each row of
``A_reverb`` is then treated as a sub-band of a small spectrogram and run
through the NMFD updates to remove the temporal smearing. The clean
estimate is ``W @ A``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nmf_core import _check_data, nmf
from .nmfd import DEFAULT_FILTER_LEN, DEFAULT_ITERS, SubbandFilter, nmfd

DEFAULT_RANK = 20
DEFAULT_NMF_ITERS = 100


@dataclass
class ActivationDeconvResult:
    W: np.ndarray
    A_reverb: np.ndarray
    A: np.ndarray
    h: SubbandFilter

    @property
    def S(self) -> np.ndarray:
        return self.W @ self.A


def deconvolve_activations(A_reverb, L: int = DEFAULT_FILTER_LEN, lam: float | None = None,
                           iters: int = DEFAULT_ITERS, shared_filter: bool = False):
    """Remove per-row causal smearing from an activation matrix.

    Returns ``(A, h)`` where ``h`` holds one unit-sum filter per row (all
    rows equal when ``shared_filter`` is set).
    """
    res = nmfd(A_reverb, L=L, lam=lam, iters=iters, shared_filter=shared_filter)
    return res.X, res.H


def activation_deconvolve_full(Y, R: int = DEFAULT_RANK, L: int = DEFAULT_FILTER_LEN,
                               lam: float | None = None, iters_nmf: int = DEFAULT_NMF_ITERS,
                               iters_deconv: int = DEFAULT_ITERS, seed=0,
                               shared_filter: bool = False) -> ActivationDeconvResult:
    Y = _check_data(Y)
    factors = nmf(Y, R, iters_nmf, seed)
    A, h = deconvolve_activations(factors.H, L, lam, iters_deconv, shared_filter)
    return ActivationDeconvResult(factors.W, factors.H, A, h)


def activation_deconvolve(Y, R: int = DEFAULT_RANK, L: int = DEFAULT_FILTER_LEN,
                          lam: float | None = None, iters_nmf: int = DEFAULT_NMF_ITERS,
                          iters_deconv: int = DEFAULT_ITERS, seed=0,
                          shared_filter: bool = False) -> np.ndarray:
    """Clean magnitude estimate ``W @ A`` (same shape as ``Y``)."""
    return activation_deconvolve_full(Y, R, L, lam, iters_nmf, iters_deconv, seed,
                                      shared_filter).S
