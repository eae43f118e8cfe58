"""NMFD with a low-rank (NMF) speech model and its two temporal extensions.

The reverberant spectrogram is modelled as ``Y' = H (*) S`` where ``(*)`` is
the per-row causal convolution of :func:`nmfdereverb.nmfd.subband_convolve`
and the clean estimate ``S`` is

* ``W @ X`` for the plain NMF speech model,
* ``sum_a W[:, :, a] @ shift_right(X, a)`` for convolutive bases, and
* ``W @ X`` on a frame-stacked spectrogram for the stacked model, where the
  sub-band filter is shared by all stack layers.

All three minimize ``KL(Y | Y') + lam * sum(X)`` with one engine, so the
degenerate settings (``T_base == 1``, ``T_stack == 1``) run exactly the
plain NMF-model updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nmf_core import _check_data, floor_eps, kl_divergence, match_scale, random_factors, \
    shift_left, shift_right
from .nmfd import DEFAULT_FILTER_LEN, DEFAULT_ITERS, SubbandFilter, correlate_rows, \
    default_sparsity, lagged_products, linear_decay_filter, subband_convolve

DEFAULT_RANK = 10
GAIN_MAX = 10.0


@dataclass
class StackedSpectrogram:
    Ytilde: np.ndarray
    T_stack: int
    K: int

    def layer(self, l: int) -> np.ndarray:
        return self.Ytilde[l * self.K:(l + 1) * self.K]


@dataclass
class NmfdNmfResult:
    """Factors of the NMF-model deconvolution.

    ``W`` is ``(K, R)`` for the plain model and ``(K, R, T_base)`` for
    convolutive bases; ``S`` is the clean estimate built from ``W`` and ``X``
    and ``Yp`` the modelled reverberant spectrogram.
    """

    W: np.ndarray
    X: np.ndarray
    H: SubbandFilter
    S: np.ndarray
    Yp: np.ndarray
    cost_trace: list = field(default_factory=list)

    def gain(self, g_max: float = GAIN_MAX) -> np.ndarray:
        eps = floor_eps(self.Yp)
        return np.clip(self.S / (self.Yp + eps), 0.0, g_max)


def stack_frames(Y, T_stack: int) -> StackedSpectrogram:
    """Column ``n`` of the result is ``Y[:, n], ..., Y[:, n + T_stack - 1]`` concatenated."""
    Y = np.asarray(Y, dtype=np.float64)
    K, N = Y.shape
    if not 1 <= T_stack <= N:
        raise ValueError(f"T_stack={T_stack} must be in [1, N={N}]")
    n_out = N - T_stack + 1
    Ytilde = np.concatenate([Y[:, l:l + n_out] for l in range(T_stack)], axis=0)
    return StackedSpectrogram(Ytilde, T_stack, K)


def _clean(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    S = W[:, :, 0] @ X
    for a in range(1, W.shape[2]):
        S = S + W[:, :, a] @ shift_right(X, a)
    return S


def _tail_sums(S: np.ndarray, L: int) -> np.ndarray:
    """``out[f, tau] = sum(S[f, :N - tau])``."""
    N = S.shape[1]
    csum = np.cumsum(S, axis=1)
    out = np.zeros((S.shape[0], L))
    for tau in range(min(L, N)):
        out[:, tau] = csum[:, N - 1 - tau]
    return out


def _fold_layers(M: np.ndarray, layers: int) -> np.ndarray:
    if layers == 1:
        return M
    return M.reshape(layers, -1, M.shape[1]).sum(axis=0)


class _Engine:
    """Cyclic multiplicative updates of H, W and X (in that order)."""

    def __init__(self, Y, K, R, L, T_base, lam, seed):
        self.Y = Y
        self.K = K
        self.layers = Y.shape[0] // K
        self.lam = lam
        self.eps = floor_eps(Y)
        W, X = random_factors(Y, [(Y.shape[0], R, T_base), (R, Y.shape[1])], seed)
        match_scale(Y, float(_clean(W, X).sum()), W, X)
        self.W = np.maximum(W, self.eps)
        self.X = np.maximum(X, self.eps)
        self.H = linear_decay_filter(K, L)

    def full_filter(self) -> np.ndarray:
        return self.H if self.layers == 1 else np.tile(self.H, (self.layers, 1))

    def model(self):
        S = _clean(self.W, self.X)
        return S, subband_convolve(S, self.full_filter())

    def cost(self) -> float:
        _, Yp = self.model()
        return kl_divergence(self.Y, Yp) + self.lam * float(self.X.sum())

    def update_h(self):
        S, Yp = self.model()
        Q = self.Y / (Yp + self.eps)
        L = self.H.shape[1]
        num = _fold_layers(lagged_products(S, Q, L), self.layers)
        den = _fold_layers(_tail_sums(S, L), self.layers)
        self.H = np.maximum(self.H * num / (den + self.eps), self.eps)

    def update_w(self):
        _, Yp = self.model()
        Q = self.Y / (Yp + self.eps)
        Hf = self.full_filter()
        N = self.Y.shape[1]
        L = Hf.shape[1]
        W_new = np.empty_like(self.W)
        for a in range(self.W.shape[2]):
            Xa = shift_right(self.X, a)
            num = np.zeros(self.W.shape[:2])
            csum = np.zeros((L, Xa.shape[0]))
            for tau in range(min(L, N)):
                num += Hf[:, tau, None] * (Q[:, tau:] @ Xa[:, :N - tau].T)
                csum[tau] = Xa[:, :N - tau].sum(axis=1)
            W_new[:, :, a] = self.W[:, :, a] * num / (Hf @ csum + self.eps)
        self.W = np.maximum(W_new, self.eps)

    def update_x(self):
        _, Yp = self.model()
        Q = self.Y / (Yp + self.eps)
        Hf = self.full_filter()
        Z = correlate_rows(Hf, Q)
        Hc = correlate_rows(Hf, np.ones_like(Q))
        num = self.W[:, :, 0].T @ Z
        den = self.W[:, :, 0].T @ Hc
        for a in range(1, self.W.shape[2]):
            num = num + shift_left(self.W[:, :, a].T @ Z, a)
            den = den + shift_left(self.W[:, :, a].T @ Hc, a)
        self.X = np.maximum(self.X * num / (den + self.lam + self.eps), self.eps)

    def normalize(self):
        # unit-sum filter rows and unit-sum basis patterns; both rescalings
        # are compensated so the modelled spectrogram does not change
        # (the eps guards only matter for all-zero input, where products underflow)
        c = self.H.sum(axis=1)
        self.H = self.H / c[:, None]
        self.W = np.maximum(self.W * np.tile(c, self.layers)[:, None, None], self.eps)
        d = self.W.sum(axis=(0, 2))
        self.W = self.W / d[None, :, None]
        self.X = np.maximum(self.X * d[:, None], self.eps)

    def step(self):
        self.update_h()
        self.update_w()
        self.update_x()
        self.normalize()


def _check(Y, R, L, iters, lam):
    Y = _check_data(Y)
    if R < 1:
        raise ValueError(f"rank must be >= 1, got {R}")
    if L < 1 or L > Y.shape[1]:
        raise ValueError(f"filter length L={L} must be in [1, N={Y.shape[1]}]")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if lam is not None and lam < 0:
        raise ValueError(f"sparsity weight must be non-negative, got {lam}")
    return Y


def factorize(Y, R: int = DEFAULT_RANK, L: int = DEFAULT_FILTER_LEN, T_base: int = 1,
              T_stack: int = 1, lam: float | None = None, iters: int = DEFAULT_ITERS,
              seed=0, callback=None) -> NmfdNmfResult:
    """Fit the NMF speech model inside the sub-band deconvolution.

    With ``T_stack > 1`` the factorization runs on the stacked spectrogram and
    the returned ``S``/``Yp`` are stacked too. ``lam`` defaults to
    ``sum(Y) * 1e-8``. ``callback(iteration, W, X, H)`` runs after every round.
    """
    Y = _check(Y, R, L, iters, lam)
    if lam is None:
        lam = default_sparsity(Y)
    if T_base < 1:
        raise ValueError(f"T_base must be >= 1, got {T_base}")
    K = Y.shape[0]
    target = stack_frames(Y, T_stack).Ytilde if T_stack > 1 else Y
    if L > target.shape[1]:
        raise ValueError(f"filter length L={L} exceeds the {target.shape[1]} stacked frames")
    eng = _Engine(target, K, R, L, T_base, lam, seed)
    trace = [eng.cost()]
    for it in range(1, iters + 1):
        eng.step()
        trace.append(eng.cost())
        if callback is not None:
            callback(it, eng.W, eng.X, eng.H)
    S, Yp = eng.model()
    W = eng.W[:, :, 0] if T_base == 1 else eng.W
    return NmfdNmfResult(W, eng.X, SubbandFilter(eng.H), S, Yp, trace)


def nmfd_nmf(Y, R: int = DEFAULT_RANK, L: int = DEFAULT_FILTER_LEN, lam: float | None = None,
             iters: int = DEFAULT_ITERS, seed=0, callback=None) -> NmfdNmfResult:
    """NMFD with ``S = W @ X``; the clean estimate is ``result.S``."""
    return factorize(Y, R, L, 1, 1, lam, iters, seed, callback)


def gain_filter(Y, result: NmfdNmfResult, g_max: float = GAIN_MAX) -> np.ndarray:
    """``G * Y`` with ``G = S / Y'`` capped to ``[0, g_max]``."""
    return result.gain(g_max) * np.asarray(Y, dtype=np.float64)


def stacked_gain(result: NmfdNmfResult, K: int, T_stack: int, N: int,
                 g_max: float = GAIN_MAX) -> np.ndarray:
    """Gain for the original ``N`` frames from a stacked fit.

    Each original frame ``n`` appears in layer ``l`` of stacked column
    ``n - l``; clean and reverberant estimates are summed over every layer
    holding frame ``n`` before taking their ratio.
    """
    n_cols = result.S.shape[1]
    num = np.zeros((K, N))
    den = np.zeros((K, N))
    for l in range(T_stack):
        num[:, l:l + n_cols] += result.S[l * K:(l + 1) * K]
        den[:, l:l + n_cols] += result.Yp[l * K:(l + 1) * K]
    eps = floor_eps(result.Yp)
    return np.clip(num / (den + eps), 0.0, g_max)


def nmfd_stacked(Y, R: int = DEFAULT_RANK, L: int = DEFAULT_FILTER_LEN, T_stack: int = 3,
                 lam: float | None = None, iters: int = DEFAULT_ITERS, seed=0,
                 g_max: float = GAIN_MAX) -> np.ndarray:
    """Frame-stacked NMF-model deconvolution; returns the gain-filtered ``G * Y``."""
    Y = _check_data(Y)
    result = factorize(Y, R, L, 1, T_stack, lam, iters, seed)
    G = stacked_gain(result, Y.shape[0], T_stack, Y.shape[1], g_max)
    return G * Y


def nmfd_convnmf(Y, R: int = DEFAULT_RANK, L: int = DEFAULT_FILTER_LEN, T_base: int = 1,
                 lam: float | None = None, iters: int = DEFAULT_ITERS, seed=0) -> np.ndarray:
    """NMF-model deconvolution with convolutive bases of ``T_base`` frames; returns ``S``."""
    return factorize(Y, R, L, T_base, 1, lam, iters, seed).S
