from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinpdp.numerics import (
    ERFI_SUPPORT,
    RngStream,
    as_cmatrix,
    as_cvector,
    erfi,
    herm_eig,
    kron,
    log_binomial,
    partial_trace_env,
    sample_discrete,
    sample_exponential,
)


def _erfi_series(x: float, n_terms: int) -> float:
    # reference sum 2/sqrt(pi) * sum x^(2k+1) / (k! (2k+1)), plain floats
    acc = []
    term = x
    for k in range(n_terms):
        acc.append(term / (2 * k + 1))
        term *= x * x / (k + 1)
    return 2.0 / math.sqrt(math.pi) * math.fsum(acc)


def test_erfi_matches_200_term_series_to_1e12():
    for x in np.linspace(-3.0, 3.0, 61):
        assert abs(erfi(float(x)) - _erfi_series(float(x), 200)) <= 1e-12


def test_erfi_series_truncation_stable_150_vs_200_terms():
    for x in np.linspace(-3.0, 3.0, 25):
        assert abs(_erfi_series(float(x), 150) - _erfi_series(float(x), 200)) <= 1e-13


def test_erfi_odd_and_zero():
    assert erfi(0.0) == 0.0
    for x in (0.3, 1.7, 2.9, 6.0):
        assert erfi(-x) == -erfi(x)


def test_erfi_rejects_outside_support():
    with pytest.raises(ValueError):
        erfi(ERFI_SUPPORT + 0.5)


def test_log_binomial_matches_exact_combinatorics():
    for n in (1, 2, 7, 30, 100, 500):
        for k in (0, 1, n // 3, n // 2, n):
            exact = math.log(math.comb(n, k))
            assert abs(log_binomial(n, k) - exact) <= 1e-10 * max(1.0, abs(exact))


def test_herm_eig_reconstructs_matrix():
    rng = np.random.default_rng(5150)
    for dim in (2, 3, 17, 64, 256):
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        h = (a + a.conj().T) / 2
        vals, vecs = herm_eig(h)
        rebuilt = (vecs * vals) @ vecs.conj().T
        assert np.abs(rebuilt - h).max() <= 1e-9
        assert np.abs(vecs.conj().T @ vecs - np.eye(dim)).max() <= 1e-10


def test_herm_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))


@given(
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=0, max_value=2**32 - 1),
)
@settings(max_examples=30, deadline=None)
def test_partial_trace_of_product_is_weighted_system_factor(ds, de, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((ds, ds)) + 1j * rng.standard_normal((ds, ds))
    b = rng.standard_normal((de, de)) + 1j * rng.standard_normal((de, de))
    got = partial_trace_env(kron(a, b), ds, de)
    assert np.abs(got - a * np.trace(b)).max() <= 1e-12 * max(1.0, np.abs(a).max() * de)


def test_kron_matches_numpy():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((2, 2))
    assert np.array_equal(kron(a, b), np.kron(a, b))


def test_sample_exponential_zero_rate_never_fires():
    gen = np.random.default_rng(0)
    assert sample_exponential(0.0, gen) == math.inf


def test_sample_exponential_mean():
    gen = np.random.default_rng(123)
    draws = np.array([sample_exponential(2.0, gen) for _ in range(20000)])
    # mean 1/2, SE = 1/(2 sqrt(n))
    assert abs(draws.mean() - 0.5) <= 4 * 0.5 / math.sqrt(draws.size)


def test_sample_discrete_frequencies():
    gen = np.random.default_rng(99)
    weights = np.array([0.5, 0.3, 0.2])
    n = 30000
    counts = np.bincount([sample_discrete(weights, gen) for _ in range(n)], minlength=3)
    for k, p in enumerate(weights):
        se = math.sqrt(n * p * (1 - p))
        assert abs(counts[k] - n * p) <= 4 * se


def test_sample_discrete_unnormalized_weights_allowed():
    gen = np.random.default_rng(4)
    idx = sample_discrete(np.array([0.0, 7.0, 0.0]), gen)
    assert idx == 1


def test_rng_stream_roles_are_distinct_streams():
    s = RngStream(42, 8)
    a = s.derive(1).generator().random(4)
    b = s.derive(2).generator().random(4)
    again = RngStream(42, 8).derive(1).generator().random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, again)


def test_rng_stream_trajectory_spacing():
    # trajectory i owns stream ids 8i..8i+7; neighbouring trajectories never collide
    a = RngStream(1, 8 * 3).derive(2).generator().random(8)
    b = RngStream(1, 8 * 4).derive(2).generator().random(8)
    assert not np.array_equal(a, b)


def test_as_cvector_and_as_cmatrix_reject_bad_shapes():
    with pytest.raises(ValueError):
        as_cvector(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        as_cmatrix(np.zeros(3))


def test_kron_is_associative():
    rng = np.random.default_rng(21)
    for _ in range(5):
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        c = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        left = kron(kron(a, b), c)
        right = kron(a, kron(b, c))
        assert np.abs(left - right).max() <= 1e-12 * np.abs(left).max()


def test_partial_trace_env_is_linear():
    rng = np.random.default_rng(22)
    ds, de = 3, 4
    m = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    n = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    a, b = 0.7 - 0.2j, -1.3 + 0.4j
    combined = partial_trace_env(a * m + b * n, ds, de)
    split = a * partial_trace_env(m, ds, de) + b * partial_trace_env(n, ds, de)
    assert np.abs(combined - split).max() <= 1e-12 * max(1.0, np.abs(split).max())


def test_herm_eig_eigenvalues_real_ascending():
    rng = np.random.default_rng(23)
    a = rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40))
    vals, _ = herm_eig((a + a.conj().T) / 2)
    assert vals.dtype == np.float64
    assert np.all(np.diff(vals) >= 0.0)


def test_sample_exponential_moments_million_draws():
    rate = 2.0
    n = 1_000_000
    gen = np.random.default_rng(1951)
    draws = np.fromiter(
        (sample_exponential(rate, gen) for _ in range(n)), dtype=np.float64, count=n
    )
    mean_se = (1.0 / rate) / math.sqrt(n)
    assert abs(draws.mean() - 0.5) <= 3.0 * mean_se
    # fourth central moment of Exp(r) is 9/r^4, so Var(S^2) ~ 8/(r^4 n)
    var_se = math.sqrt(8.0 / n) / rate**2
    assert abs(draws.var(ddof=1) - 1.0 / rate**2) <= 5.0 * var_se


def test_sample_discrete_one_three_million_draws():
    gen = np.random.default_rng(1952)
    weights = np.array([1.0, 3.0])
    n = 1_000_000
    hits = sum(sample_discrete(weights, gen) for _ in range(n))
    sigma = math.sqrt(n * 0.75 * 0.25)
    assert abs(hits - 0.75 * n) <= 3.0 * sigma
