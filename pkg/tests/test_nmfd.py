import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nmfdereverb.nmfd import (
    DEFAULT_FILTER_LEN,
    DEFAULT_ITERS,
    SPARSITY_SCALE,
    SubbandFilter,
    default_sparsity,
    dereverb_nmfd,
    linear_decay_filter,
    nmfd,
    nmfd_cost,
    subband_convolve,
)


def naive_subband(X, H):
    K, N = X.shape
    out = np.zeros((K, N))
    for k in range(K):
        for n in range(N):
            for tau in range(H.shape[1]):
                if n - tau >= 0:
                    out[k, n] += X[k, n - tau] * H[k, tau]
    return out


def synth_fixture(seed=0, K=40, N=150, L=11):
    rng = np.random.default_rng(seed)
    X = rng.random((K, N)) * (rng.random((K, N)) < 0.15)
    H = np.exp(-np.arange(L) / rng.uniform(1.5, 3.0, (K, 1)))
    H /= H.sum(axis=1, keepdims=True)
    return subband_convolve(X, H), X, H


def test_defaults():
    assert (DEFAULT_FILTER_LEN, DEFAULT_ITERS, SPARSITY_SCALE) == (11, 20, 1e-8)
    Y = np.full((3, 4), 2.0)
    assert default_sparsity(Y) == pytest.approx(24e-8)


def test_linear_decay_filter():
    H = linear_decay_filter(2, 4)
    np.testing.assert_allclose(H[0], [0.4, 0.3, 0.2, 0.1])
    SubbandFilter(H)


def test_subband_filter_validation():
    with pytest.raises(ValueError):
        SubbandFilter(np.array([[0.5, 0.4]]))
    with pytest.raises(ValueError):
        SubbandFilter(np.array([[1.5, -0.5]]))
    assert SubbandFilter(np.array([[0.25, 0.75]])).L == 2


def test_subband_identity_and_delay(rng):
    X = rng.random((3, 6))
    np.testing.assert_array_equal(subband_convolve(X, np.ones((3, 1))), X)
    delayed = subband_convolve(X, np.array([[0.0, 1.0, 0.0]] * 3))
    np.testing.assert_array_equal(delayed[:, 1:], X[:, :-1])
    assert not np.any(delayed[:, 0])


def test_subband_naive_oracle(rng):
    X, H = rng.random((3, 5)), rng.random((3, 2))
    np.testing.assert_allclose(subband_convolve(X, H), naive_subband(X, H), atol=1e-15)
    H = rng.random((3, 7))
    np.testing.assert_allclose(subband_convolve(X, H), naive_subband(X, H), atol=1e-15)


def test_cost_cases():
    Y = np.array([[1.0, 2.0], [3.0, 4.0]])
    H = np.array([[1.0], [1.0]])
    assert nmfd_cost(Y, Y, H, 0.0) == 0.0
    assert nmfd_cost(Y, np.zeros_like(Y), H, 0.3) == pytest.approx(30.0)
    X = np.array([[0.5, 1.0], [2.0, 0.0]])
    H2 = np.array([[0.5, 0.5], [1.0, 0.0]])
    # Y' = [[0.25, 0.75], [2, 0]]; residual squares 0.5625+1.5625+1+16; 2*lam*sum|X| = 2*0.1*3.5
    assert nmfd_cost(Y, X, H2, 0.1) == pytest.approx(19.125 + 0.7, abs=1e-12)


def test_synthetic_recovery():
    Y, _, _ = synth_fixture()
    res = nmfd(Y, L=11, iters=20)
    err = np.linalg.norm(Y - subband_convolve(res.X, res.H)) / np.linalg.norm(Y)
    assert err <= 0.05


def test_l1_reduces_to_identity():
    Y, _, _ = synth_fixture(1)
    Y = Y + 0.01
    res = nmfd(Y, L=1, lam=0.0, iters=20)
    np.testing.assert_array_equal(res.H.H, np.ones((Y.shape[0], 1)))
    assert np.linalg.norm(res.X - Y) / np.linalg.norm(Y) <= 1e-3


def test_invariants_each_iteration():
    Y, _, _ = synth_fixture(2)

    def check(it, X, H):
        assert X.min() >= 0 and H.min() >= 0
        assert np.max(np.abs(H.sum(axis=1) - 1)) <= 1e-9

    res = nmfd(Y, iters=20, callback=check)
    assert len(res.cost_trace) == 21
    for a, b in zip(res.cost_trace, res.cost_trace[1:]):
        assert b <= a * (1 + 1e-4)


def test_deterministic():
    Y, _, _ = synth_fixture(3)
    a, b = nmfd(Y), nmfd(Y)
    assert a.X.tobytes() == b.X.tobytes() and a.H.H.tobytes() == b.H.H.tobytes()


def test_shared_filter_rows_equal():
    Y, _, _ = synth_fixture(4)
    H = nmfd(Y, shared_filter=True).H.H
    np.testing.assert_allclose(H, np.broadcast_to(H[0], H.shape), atol=1e-12)


@pytest.mark.parametrize("kw", [dict(L=0), dict(L=500), dict(lam=-1.0), dict(iters=0)])
def test_argument_errors(kw):
    with pytest.raises(ValueError):
        nmfd(np.ones((4, 20)), **kw)


def test_nmfd_rejects_negative():
    with pytest.raises(ValueError):
        nmfd(-np.ones((4, 20)))


def test_dereverb_near_noop_on_clean():
    from nmfdereverb.metrics import cepstral_distortion
    from nmfdereverb.speechlike import synth_utterance

    clean = synth_utterance(11, duration=2.0)
    out = dereverb_nmfd(clean)
    assert len(out) == len(clean)
    assert cepstral_distortion(clean, out) <= 0.3


@settings(max_examples=20, deadline=None)
@given(Y=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(4, 12)),
                elements=st.one_of(st.just(0.0), st.floats(1e-6, 10))),
       L=st.integers(1, 4))
def test_property_nonnegative_unit_rows(Y, L):
    def check(it, X, H):
        assert X.min() >= 0 and H.min() >= 0
        assert np.max(np.abs(H.sum(axis=1) - 1)) <= 1e-9

    nmfd(Y, L=L, iters=5, callback=check)
