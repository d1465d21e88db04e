"""Product-pair trajectory engine: rates, jumps, drift, unbiasedness."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinpdp.engine import (
    InteractionHamiltonian,
    InteractionTerm,
    JumpRecord,
    ProductPairState,
    apply_jump_form1,
    drift_form1,
    estimate_rho_form1,
    rates_form1,
    run_trajectory_form1,
)
from spinpdp.numerics import RngStream
from spinpdp.oracle import build_spinstar, reduced_states, spinstar_terms
from spinpdp.spinstar import SpinStarParams

UP = np.array([1.0, 0.0], dtype=np.complex128)
DOWN = np.array([0.0, 1.0], dtype=np.complex128)


def _random_hermitian_hamiltonian(dS, dE, seed, n_pairs=2):
    """Random interaction built from adjoint pairs so the sum is Hermitian."""
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(n_pairs):
        a = rng.normal(size=(dS, dS)) + 1j * rng.normal(size=(dS, dS))
        b = rng.normal(size=(dE, dE)) + 1j * rng.normal(size=(dE, dE))
        terms.append(InteractionTerm(a, b))
        terms.append(InteractionTerm(a.conj().T, b.conj().T))
    return InteractionHamiltonian(tuple(terms))


def _random_state(dim, rng):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _spinstar_hamiltonian(n_bath, coupling=1.0):
    terms = spinstar_terms(SpinStarParams(n_bath=n_bath, coupling=coupling))
    return InteractionHamiltonian(tuple(InteractionTerm(a, b) for a, b in terms))


def test_hamiltonian_construction_validation():
    with pytest.raises(ValueError, match="square"):
        InteractionTerm(np.ones((2, 3)), np.eye(2))
    with pytest.raises(ValueError, match="at least one"):
        InteractionHamiltonian(())
    sp = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="inconsistent"):
        InteractionHamiltonian((InteractionTerm(sp, np.eye(2)), InteractionTerm(sp, np.eye(3))))
    with pytest.raises(ValueError, match="not Hermitian"):
        InteractionHamiltonian((InteractionTerm(sp, np.eye(2)),))
    with pytest.raises(ValueError, match="dS mismatch"):
        InteractionHamiltonian((InteractionTerm(np.eye(2), np.eye(2)),), dS=3)


def test_total_matrix_is_sum_of_kron_terms():
    h = _random_hermitian_hamiltonian(2, 3, seed=1)
    expected = sum(np.kron(t.a_op, t.b_op) for t in h.terms)
    assert np.abs(h.total_matrix() - expected).max() < 1e-14
    assert h.n_terms == 4
    assert (h.dS, h.dE) == (2, 3)


def test_rates_form1_norm_ratio_definition():
    h = _random_hermitian_hamiltonian(2, 3, seed=2)
    rng = np.random.default_rng(3)
    # deliberately unnormalized vectors: rates divide the norms out
    s = ProductPairState(
        psi=(2.5 * _random_state(2, rng), _random_state(2, rng)),
        chi=(_random_state(3, rng), 0.1 * _random_state(3, rng)),
    )
    per_pair, totals = rates_form1(h, s)
    assert per_pair.shape == (h.n_terms, 2)
    for i in range(2):
        psi, chi = s.psi[i], s.chi[i]
        for alpha, term in enumerate(h.terms):
            manual = (
                np.linalg.norm(term.a_op @ psi)
                * np.linalg.norm(term.b_op @ chi)
                / (np.linalg.norm(psi) * np.linalg.norm(chi))
            )
            assert abs(per_pair[alpha, i] - manual) < 1e-12
        assert abs(totals[i] - per_pair[:, i].sum()) < 1e-12


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.01, 50.0))
def test_rates_invariant_under_state_rescaling(seed, scale):
    h = _random_hermitian_hamiltonian(2, 2, seed=4)
    rng = np.random.default_rng(seed)
    psi = (_random_state(2, rng), _random_state(2, rng))
    chi = (_random_state(2, rng), _random_state(2, rng))
    base, _ = rates_form1(h, ProductPairState(psi, chi))
    scaled_state = ProductPairState(
        (psi[0] * scale, psi[1]), (chi[0], chi[1] * scale)
    )
    scaled, _ = rates_form1(h, scaled_state)
    assert np.abs(scaled - base).max() < 1e-10 * max(1.0, base.max())


def test_jump_preserves_norms_and_counts():
    h = _random_hermitian_hamiltonian(2, 3, seed=5)
    rng = np.random.default_rng(6)
    s = ProductPairState(
        psi=(3.0 * _random_state(2, rng), _random_state(2, rng)),
        chi=(_random_state(3, rng), _random_state(3, rng)),
        jump_counts=(4, 0),
    )
    after = apply_jump_form1(h, s, alpha=1, nu=1)
    assert abs(np.linalg.norm(after.psi[0]) - np.linalg.norm(s.psi[0])) < 1e-12
    assert abs(np.linalg.norm(after.chi[0]) - np.linalg.norm(s.chi[0])) < 1e-12
    assert after.jump_counts == (5, 0)
    # the untouched pair is passed through unchanged
    assert np.array_equal(after.psi[1], s.psi[1])
    assert np.array_equal(after.chi[1], s.chi[1])


def test_jump_prefactors():
    # psi picks up -i |psi|/|A psi| A psi, chi picks up |chi|/|B chi| B chi
    h = _spinstar_hamiltonian(1)
    s = ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN))
    term = h.terms[1]  # (s-, c J+): the only open channel from (up, down)
    after = apply_jump_form1(h, s, alpha=1, nu=1)
    a_psi = term.a_op @ UP
    b_chi = term.b_op @ DOWN
    expected_psi = (-1j / np.linalg.norm(a_psi)) * a_psi
    expected_chi = (1.0 / np.linalg.norm(b_chi)) * b_chi
    assert np.abs(after.psi[0] - expected_psi).max() < 1e-14
    assert np.abs(after.chi[0] - expected_chi).max() < 1e-14


def test_jump_rejections():
    h = _spinstar_hamiltonian(1)
    s = ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN))
    with pytest.raises(ValueError, match="nu"):
        apply_jump_form1(h, s, alpha=0, nu=3)
    with pytest.raises(ValueError, match="rate vanishes"):
        apply_jump_form1(h, s, alpha=0, nu=1)  # s+ annihilates |up>


def test_drift_scales_chi_only():
    rng = np.random.default_rng(7)
    s = ProductPairState(
        psi=(_random_state(2, rng), _random_state(2, rng)),
        chi=(_random_state(3, rng), _random_state(3, rng)),
        jump_counts=(1, 2),
    )
    g = np.array([0.4, 1.1])
    dt = 0.25
    after = drift_form1(s, dt, g)
    for i in range(2):
        assert np.array_equal(after.psi[i], s.psi[i])
        assert np.abs(after.chi[i] - s.chi[i] * math.exp(g[i] * dt)).max() < 1e-14
    assert after.jump_counts == (1, 2)
    with pytest.raises(ValueError, match="nonnegative"):
        drift_form1(s, -0.1, g)
    with pytest.raises(ValueError, match="per nu"):
        drift_form1(s, 0.1, [0.4])


def test_state_validation():
    with pytest.raises(ValueError, match="zero psi"):
        ProductPairState(psi=(np.zeros(2), UP), chi=(DOWN, DOWN))
    with pytest.raises(ValueError, match="pair"):
        ProductPairState(psi=(UP,), chi=(DOWN, DOWN))
    with pytest.raises(ValueError, match="differ in dimension"):
        ProductPairState(psi=(UP, np.ones(3)), chi=(DOWN, DOWN))
    with pytest.raises(ValueError, match="nonnegative"):
        ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN), jump_counts=(-1, 0))
    with pytest.raises(ValueError, match="invalid jump record"):
        JumpRecord(time=0.5, nu=0, alpha=0)


def test_zero_hamiltonian_trajectory_is_frozen():
    zero = InteractionHamiltonian((InteractionTerm(np.zeros((2, 2)), np.zeros((2, 2))),))
    rng = np.random.default_rng(8)
    init = ProductPairState(
        psi=(_random_state(2, rng), _random_state(2, rng)),
        chi=(_random_state(2, rng), _random_state(2, rng)),
    )
    grid = np.linspace(0.2, 3.0, 7)
    records: list[JumpRecord] = []
    snaps = run_trajectory_form1(zero, init, grid, RngStream(9, 0), records=records)
    assert records == []
    for s in snaps:
        assert s.jump_counts == (0, 0)
        for i in range(2):
            assert np.array_equal(s.psi[i], init.psi[i])
            assert np.array_equal(s.chi[i], init.chi[i])


def test_trajectory_grid_validation():
    h = _spinstar_hamiltonian(1)
    init = ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN))
    for bad in ([], [-0.5, 1.0], [0.5, 0.5], [1.0, 0.5]):
        with pytest.raises(ValueError, match="ascending"):
            run_trajectory_form1(h, init, bad, RngStream(1, 0))


def test_jump_records_sorted_and_alternating():
    # from (up, down) the only open channel is alpha=1, after which only
    # alpha=0 opens, and so on: records must alternate within each nu
    h = _spinstar_hamiltonian(1)
    init = ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN))
    records: list[JumpRecord] = []
    run_trajectory_form1(h, init, [5.0], RngStream(17, 3), records=records)
    assert len(records) > 4
    times = [r.time for r in records]
    assert times == sorted(times)
    for nu in (1, 2):
        alphas = [r.alpha for r in records if r.nu == nu]
        assert alphas == [(i + 1) % 2 for i in range(len(alphas))]


def test_trajectory_rng_forms_agree():
    h = _spinstar_hamiltonian(2)
    rng = np.random.default_rng(10)
    init = ProductPairState(
        psi=(UP, UP), chi=(_random_state(4, rng), _random_state(4, rng))
    )
    grid = np.linspace(0.1, 1.5, 5)
    stream = RngStream(123, 40)
    by_stream = run_trajectory_form1(h, init, grid, stream)
    explicit = (stream.derive(1).generator(), stream.derive(2).generator())
    by_pair = run_trajectory_form1(h, init, grid, explicit)
    for a, b in zip(by_stream, by_pair):
        for i in range(2):
            assert np.array_equal(a.psi[i], b.psi[i])
            assert np.array_equal(a.chi[i], b.chi[i])


def test_jump_count_matches_constant_rate_poisson():
    # single bath spin: exactly one channel is open at every instant, at
    # the constant rate 2A, so the per-pair jump count at time t is
    # Poisson(2 A t)
    a = 1.0
    t_end = 2.0
    h = _spinstar_hamiltonian(1, coupling=a)
    init = ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN))
    counts = []
    for k in range(600):
        snap = run_trajectory_form1(h, init, [t_end], RngStream(77, k))[0]
        counts.extend(snap.jump_counts)
    counts = np.asarray(counts, dtype=np.float64)
    lam = 2.0 * a * t_end
    n = counts.size
    assert abs(counts.mean() - lam) < 3.0 * math.sqrt(lam / n)
    # variance of the sample variance of a Poisson: approx lam(1+2lam)/n
    assert abs(counts.var(ddof=1) - lam) < 3.0 * math.sqrt(lam * (1.0 + 2.0 * lam) / n)


def test_reduced_estimate_unbiased_against_exact_propagator():
    params = SpinStarParams(n_bath=1, coupling=1.0)
    h = _spinstar_hamiltonian(1)
    model = build_spinstar(params)
    rho0 = np.kron(np.outer(UP, UP.conj()), np.outer(DOWN, DOWN.conj()))
    grid = np.array([0.35, 0.8])
    exact = reduced_states(model, rho0, grid)
    init = ProductPairState(psi=(UP, UP), chi=(DOWN, DOWN))
    snaps_by_time: list[list[ProductPairState]] = [[] for _ in grid]
    for k in range(800):
        for i, s in enumerate(run_trajectory_form1(h, init, grid, RngStream(5, k))):
            snaps_by_time[i].append(s)
    for i in range(grid.size):
        _, reduced = estimate_rho_form1(snaps_by_time[i])
        err = np.abs(reduced.mean - exact[i])
        # 4 standard errors entrywise, with a floor for exactly-zero entries
        assert np.all(err <= 4.0 * reduced.stderr + 1e-12)


def test_estimate_rho_form1_sample_values():
    rng = np.random.default_rng(11)
    s = ProductPairState(
        psi=(_random_state(2, rng), _random_state(2, rng)),
        chi=(_random_state(3, rng), _random_state(3, rng)),
    )
    total, reduced = estimate_rho_form1([s])
    expected_total = np.outer(
        np.kron(s.psi[0], s.chi[0]), np.kron(s.psi[1], s.chi[1]).conj()
    )
    expected_reduced = np.outer(s.psi[0], s.psi[1].conj()) * np.vdot(s.chi[1], s.chi[0])
    assert np.abs(total.mean - expected_total).max() < 1e-14
    assert np.abs(reduced.mean - expected_reduced).max() < 1e-14
    assert total.count == 1 and np.isnan(total.stderr).all()
    # partial trace of the total sample reproduces the reduced sample
    traced = np.trace(expected_total.reshape(2, 3, 2, 3), axis1=1, axis2=3)
    assert np.abs(traced - expected_reduced).max() < 1e-14
    with pytest.raises(ValueError, match="empty"):
        estimate_rho_form1([])
