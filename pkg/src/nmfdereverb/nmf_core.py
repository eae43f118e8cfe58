"""KL-divergence NMF and convolutive NMF with multiplicative updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_SCALE = 1e-12


def floor_eps(V: np.ndarray) -> float:
    """Division/flooring epsilon for data ``V``: ``1e-12 * max(V)``.

    Falls back to the smallest normal float when ``V`` is all zeros.
    """
    peak = float(np.max(V)) if V.size else 0.0
    return max(EPS_SCALE * peak, np.finfo(np.float64).tiny)


def _check_data(V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValueError("input matrix contains NaN or Inf")
    if np.any(V < 0):
        raise ValueError("input matrix must be non-negative")
    return V


def kl_divergence(V, Vhat) -> float:
    """Generalized KL divergence ``sum(V ln(V/Vhat) - V + Vhat)`` with ``0 ln 0 = 0``."""
    V = np.asarray(V, dtype=np.float64)
    Vhat = np.asarray(Vhat, dtype=np.float64)
    if V.shape != Vhat.shape:
        raise ValueError(f"shape mismatch: {V.shape} vs {Vhat.shape}")
    pos = V > 0
    with np.errstate(divide="ignore"):
        log_term = np.where(pos, V * np.log(np.where(pos, V, 1.0) / np.where(pos, Vhat, 1.0)), 0.0)
    return float(np.sum(log_term - V + Vhat))


def shift_right(H: np.ndarray, t: int) -> np.ndarray:
    """Shift columns right by ``t``; the left edge is zero-filled."""
    if t == 0:
        return H
    out = np.zeros_like(H)
    if t < H.shape[1]:
        out[:, t:] = H[:, :-t]
    return out


def shift_left(H: np.ndarray, t: int) -> np.ndarray:
    """Shift columns left by ``t``; the right edge is zero-filled."""
    if t == 0:
        return H
    out = np.zeros_like(H)
    if t < H.shape[1]:
        out[:, :-t] = H[:, t:]
    return out


@dataclass
class NmfFactors:
    """``V ~ W @ H``. ``cost[0]`` is the KL cost at initialization, ``cost[i]`` after iteration i."""

    W: np.ndarray
    H: np.ndarray
    cost: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def reconstruct(self) -> np.ndarray:
        return self.W @ self.H


@dataclass
class ConvNmfFactors:
    """``V ~ sum_t W[:, :, t] @ shift_right(H, t)``."""

    W: np.ndarray
    H: np.ndarray
    cost: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    @property
    def T(self) -> int:
        return self.W.shape[2]

    def reconstruct(self) -> np.ndarray:
        return conv_reconstruct(self)


def random_factors(V: np.ndarray, shapes, seed) -> list[np.ndarray]:
    """Uniform (0, 1] factors drawn in order, then scaled by a common factor.

    The caller rescales with :func:`match_scale`; drawing is separated so
    every model consumes the generator identically.
    """
    rng = np.random.default_rng(seed)
    return [1.0 - rng.random(shape) for shape in shapes]


def match_scale(V: np.ndarray, approx_sum: float, *factors: np.ndarray) -> None:
    """Scale two factors in place so their product has the same total as ``V``."""
    total = float(V.sum())
    scale = np.sqrt(total / approx_sum) if approx_sum > 0 else 0.0
    for f in factors:
        f *= scale


def kl_update_h(V, W, H, eps):
    """One multiplicative KL update of the activations."""
    ratio = V / (W @ H + eps)
    return np.maximum(H * (W.T @ ratio) / (W.sum(axis=0)[:, None] + eps), eps)


def kl_update_w(V, W, H, eps):
    """One multiplicative KL update of the basis."""
    ratio = V / (W @ H + eps)
    return np.maximum(W * (ratio @ H.T) / (H.sum(axis=1)[None, :] + eps), eps)


def init_nmf(V, R: int, seed) -> tuple[np.ndarray, np.ndarray]:
    V = _check_data(V)
    K, N = V.shape
    W, H = random_factors(V, [(K, R), (R, N)], seed)
    match_scale(V, float((W @ H).sum()), W, H)
    eps = floor_eps(V)
    return np.maximum(W, eps), np.maximum(H, eps)


def nmf(V, R: int, iters: int = 100, seed=0, callback=None) -> NmfFactors:
    """KL-divergence NMF by alternating multiplicative updates (H, then W).

    Parameters
    ----------
    V : (K, N) array
        Non-negative data.
    R : int
        Rank.
    iters : int
        Fixed number of update rounds.
    seed : int
        Seed of the random initialization.
    callback : callable, optional
        Called as ``callback(iteration, W, H)`` after every round.
    """
    V = _check_data(V)
    if R < 1 or iters < 1:
        raise ValueError("R and iters must be >= 1")
    eps = floor_eps(V)
    W, H = init_nmf(V, R, seed)
    cost = [kl_divergence(V, W @ H)]
    for it in range(1, iters + 1):
        H = kl_update_h(V, W, H, eps)
        W = kl_update_w(V, W, H, eps)
        cost.append(kl_divergence(V, W @ H))
        if callback is not None:
            callback(it, W, H)
    return NmfFactors(W, H, cost)


def conv_reconstruct(f: ConvNmfFactors) -> np.ndarray:
    W, H = f.W, f.H
    out = W[:, :, 0] @ H
    for t in range(1, W.shape[2]):
        out = out + W[:, :, t] @ shift_right(H, t)
    return out


def conv_nmf(V, R: int, T: int, iters: int = 100, seed=0, callback=None) -> ConvNmfFactors:
    """Convolutive KL-NMF with basis patterns of ``T`` frames.

    All basis slices are updated together against the same reconstruction.
    The activation update averages the per-shift numerators and the per-shift
    denominators over the ``T`` shifts before taking their ratio; the
    denominator only counts frames that stay inside the matrix after the
    shift. With ``T == 1`` every step is the plain :func:`nmf` step.
    """
    V = _check_data(V)
    K, N = V.shape
    if R < 1 or iters < 1:
        raise ValueError("R and iters must be >= 1")
    if not 1 <= T <= N:
        raise ValueError(f"pattern length T={T} must be in [1, N={N}]")
    eps = floor_eps(V)
    W, H = random_factors(V, [(K, R, T), (R, N)], seed)
    match_scale(V, float(conv_reconstruct(ConvNmfFactors(W, H)).sum()), W, H)
    W, H = np.maximum(W, eps), np.maximum(H, eps)
    f = ConvNmfFactors(W, H)
    f.cost.append(kl_divergence(V, conv_reconstruct(f)))
    ones = np.ones_like(V)
    for it in range(1, iters + 1):
        ratio = V / (conv_reconstruct(f) + eps)
        num = f.W[:, :, 0].T @ ratio
        den = f.W[:, :, 0].sum(axis=0)[:, None] * ones[:1]
        for t in range(1, T):
            num = num + f.W[:, :, t].T @ shift_left(ratio, t)
            den = den + f.W[:, :, t].sum(axis=0)[:, None] * shift_left(ones[:1], t)
        f.H = np.maximum(f.H * num / (den + eps), eps)

        ratio = V / (conv_reconstruct(f) + eps)
        W_new = np.empty_like(f.W)
        for t in range(T):
            Ht = shift_right(f.H, t)
            W_new[:, :, t] = f.W[:, :, t] * (ratio @ Ht.T) / (Ht.sum(axis=1)[None, :] + eps)
        f.W = np.maximum(W_new, eps)

        f.cost.append(kl_divergence(V, conv_reconstruct(f)))
        if callback is not None:
            callback(it, f.W, f.H)
    return f
