"""Generic jump-process Monte Carlo engine for bipartite interaction Hamiltonians.

Two unravellings of the same von Neumann dynamics, both exact in
distribution and free of time-step error because every ingredient between
jumps is constant: jumps renormalize the states they touch, drifts are
scalar exponentials, so waiting times can be sampled from the exponential
law directly.

Form 1 evolves two product pairs psi_nu (x) chi_nu whose mean dyad
reproduces the total density matrix.  Form 2 keeps a pair of system
vectors plus one environment operator R_E, with configurable constant
jump rates; the rate freedom is paid for by per-jump scale factors.

Everything here works on small dense Hilbert spaces.  Large baths belong
to the specialized spin-star paths, which collapse the environment to a
few collective states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, as_cmatrix, as_cvector, kron, sample_discrete, sample_exponential

__all__ = [
    "HERMITICITY_TOL",
    "InteractionTerm",
    "InteractionHamiltonian",
    "ProductPairState",
    "Form2State",
    "Form2Config",
    "JumpRecord",
    "RhoEstimate",
    "rates_form1",
    "apply_jump_form1",
    "drift_form1",
    "run_trajectory_form1",
    "estimate_rho_form1",
    "rates_form2",
    "Form2Rates",
    "apply_jump_form2",
    "run_trajectory_form2",
    "estimate_rho_form2",
    "draw_initial_state",
    "initial_ensemble",
]

HERMITICITY_TOL = 1e-10
MIXTURE_TOL = 1e-10


@dataclass(frozen=True)
class InteractionTerm:
    """One product term A (x) B of the interaction Hamiltonian."""

    a_op: np.ndarray
    b_op: np.ndarray

    def __post_init__(self) -> None:
        a = as_cmatrix(self.a_op)
        b = as_cmatrix(self.b_op)
        if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
            raise ValueError("interaction term operators must be square")
        object.__setattr__(self, "a_op", a)
        object.__setattr__(self, "b_op", b)


@dataclass
class InteractionHamiltonian:
    """Sum of product terms, validated Hermitian at construction.

    Read-only after construction; the stacked operator arrays and the
    assembled total matrix are cached for the hot paths.
    """

    terms: tuple[InteractionTerm, ...]
    dS: int = 0
    dE: int = 0
    _a_stack: np.ndarray = field(init=False, repr=False, compare=False)
    _b_stack: np.ndarray = field(init=False, repr=False, compare=False)
    _total: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("at least one interaction term required")
        ds = terms[0].a_op.shape[0]
        de = terms[0].b_op.shape[0]
        for t in terms:
            if t.a_op.shape[0] != ds or t.b_op.shape[0] != de:
                raise ValueError("inconsistent operator dimensions across terms")
        if self.dS and self.dS != ds:
            raise ValueError(f"dS mismatch: declared {self.dS}, terms have {ds}")
        if self.dE and self.dE != de:
            raise ValueError(f"dE mismatch: declared {self.dE}, terms have {de}")
        self.terms = terms
        self.dS = ds
        self.dE = de
        self._a_stack = np.stack([t.a_op for t in terms])
        self._b_stack = np.stack([t.b_op for t in terms])
        total = np.zeros((ds * de, ds * de), dtype=np.complex128)
        for t in terms:
            total += kron(t.a_op, t.b_op)
        defect = np.abs(total - total.conj().T).max()
        if defect > HERMITICITY_TOL:
            raise ValueError(
                f"sum of terms not Hermitian (defect {defect:.2e} exceeds "
                f"tolerance {HERMITICITY_TOL:.0e})"
            )
        self._total = total

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def total_matrix(self) -> np.ndarray:
        return self._total.copy()


def _nonzero_pair(vectors, label: str) -> tuple[np.ndarray, np.ndarray]:
    if len(vectors) != 2:
        raise ValueError(f"{label} must be a pair")
    out = []
    for v in vectors:
        cv = as_cvector(v)
        if not np.any(cv):
            raise ValueError(f"zero {label} vector")
        out.append(cv)
    if out[0].shape != out[1].shape:
        raise ValueError(f"{label} pair members differ in dimension")
    return out[0], out[1]


def _count_pair(jump_counts) -> tuple[int, int]:
    n1, n2 = jump_counts
    if n1 < 0 or n2 < 0:
        raise ValueError("jump counts must be nonnegative")
    return int(n1), int(n2)


@dataclass(frozen=True)
class ProductPairState:
    """Two product pairs psi_nu (x) chi_nu with their jump counters."""

    psi: tuple[np.ndarray, np.ndarray]
    chi: tuple[np.ndarray, np.ndarray]
    jump_counts: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", _nonzero_pair(self.psi, "psi"))
        object.__setattr__(self, "chi", _nonzero_pair(self.chi, "chi"))
        object.__setattr__(self, "jump_counts", _count_pair(self.jump_counts))


@dataclass(frozen=True)
class Form2State:
    """System vector pair, environment operator, counters, trajectory weight.

    The weight is the accumulated likelihood correction from restricted
    jump selection; it stays 1 while every configured pair is reachable.
    """

    psi: tuple[np.ndarray, np.ndarray]
    r_env: np.ndarray
    jump_counts: tuple[int, int] = (0, 0)
    weight: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", _nonzero_pair(self.psi, "psi"))
        r = as_cmatrix(self.r_env)
        if r.shape[0] != r.shape[1]:
            raise ValueError("r_env must be square")
        object.__setattr__(self, "r_env", r)
        object.__setattr__(self, "jump_counts", _count_pair(self.jump_counts))
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ValueError("weight must be finite and nonnegative")


@dataclass(frozen=True)
class Form2Config:
    """Constant configured rates, one per (term, nu) pair, shape (n_terms, 2).

    Rates are normally strictly positive.  A zero entry disables that
    channel entirely, which is only consistent with the dynamics when the
    corresponding term never acts (e.g. the zero Hamiltonian); the engine
    does not second-guess the caller there.
    """

    const_rates: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.const_rates, dtype=np.float64)
        if r.ndim != 2 or r.shape[1] != 2 or r.shape[0] < 1:
            raise ValueError("const_rates must have shape (n_terms, 2)")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("rates must be finite and nonnegative")
        object.__setattr__(self, "const_rates", r)

    @property
    def gamma_total(self) -> float:
        return float(self.const_rates.sum())


@dataclass(frozen=True)
class JumpRecord:
    """One realized jump event: when, which sub-process, which term."""

    time: float
    nu: int
    alpha: int

    def __post_init__(self) -> None:
        if self.time < 0 or self.nu not in (1, 2) or self.alpha < 0:
            raise ValueError("invalid jump record")


@dataclass(frozen=True)
class RhoEstimate:
    """Ensemble mean of a matrix-valued sample with per-entry standard errors."""

    mean: np.ndarray
    stderr: np.ndarray
    count: int


def _component_rates_form1(h: InteractionHamiltonian, psi, chi) -> tuple[np.ndarray, float]:
    norm_psi = np.linalg.norm(psi)
    norm_chi = np.linalg.norm(chi)
    if norm_psi == 0.0 or norm_chi == 0.0:
        raise ValueError("zero-norm state vector")
    a_norms = np.linalg.norm(h._a_stack @ psi, axis=1)
    b_norms = np.linalg.norm(h._b_stack @ chi, axis=1)
    gamma = a_norms * b_norms / (norm_psi * norm_chi)
    return gamma, float(gamma.sum())


def rates_form1(
    h: InteractionHamiltonian, s: ProductPairState
) -> tuple[np.ndarray, np.ndarray]:
    """Jump rates (norm-ratio form), per (term, nu) plus the per-nu totals.

    Gamma_anu = |A_a psi_nu| |B_a chi_nu| / (|psi_nu| |chi_nu|); invariant
    under rescaling of either vector, hence constant along the drift.
    """
    per_pair = np.empty((h.n_terms, 2), dtype=np.float64)
    totals = np.empty(2, dtype=np.float64)
    for i in range(2):
        per_pair[:, i], totals[i] = _component_rates_form1(h, s.psi[i], s.chi[i])
    return per_pair, totals


def _form1_jump(h: InteractionHamiltonian, psi, chi, alpha: int):
    a_psi = h.terms[alpha].a_op @ psi
    b_chi = h.terms[alpha].b_op @ chi
    norm_a = np.linalg.norm(a_psi)
    norm_b = np.linalg.norm(b_chi)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("jump applied where the rate vanishes")
    new_psi = (-1j * np.linalg.norm(psi) / norm_a) * a_psi
    new_chi = (np.linalg.norm(chi) / norm_b) * b_chi
    return new_psi, new_chi


def apply_jump_form1(
    h: InteractionHamiltonian, s: ProductPairState, alpha: int, nu: int
) -> ProductPairState:
    """Instantaneous norm-preserving jump on the nu-th product pair."""
    if nu not in (1, 2):
        raise ValueError("nu must be 1 or 2")
    i = nu - 1
    new_psi, new_chi = _form1_jump(h, s.psi[i], s.chi[i], alpha)
    psi = list(s.psi)
    chi = list(s.chi)
    psi[i] = new_psi
    chi[i] = new_chi
    counts = list(s.jump_counts)
    counts[i] += 1
    return ProductPairState(tuple(psi), tuple(chi), tuple(counts))


def drift_form1(s: ProductPairState, dt: float, gamma_pair) -> ProductPairState:
    """Deterministic inter-jump evolution: chi_nu scaled by e^{Gamma_nu dt}."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    g = np.asarray(gamma_pair, dtype=np.float64)
    if g.shape != (2,):
        raise ValueError("gamma_pair must hold one rate per nu")
    chi = tuple(s.chi[i] * math.exp(g[i] * dt) for i in range(2))
    return ProductPairState(s.psi, chi, s.jump_counts)


def _resolve_rng(rng) -> tuple[np.random.Generator, np.random.Generator]:
    if isinstance(rng, RngStream):
        return rng.derive(1).generator(), rng.derive(2).generator()
    gen1, gen2 = rng
    return gen1, gen2


def _evolve_form1_component(h, psi, chi, grid, gen, nu, records):
    """Event-driven evolution of one product pair across the grid."""
    snaps_psi: list[np.ndarray] = []
    snaps_chi: list[np.ndarray] = []
    snaps_n: list[int] = []
    t_cur = 0.0
    n_jumps = 0
    gi = 0
    n_grid = len(grid)
    while gi < n_grid:
        gamma, gamma_total = _component_rates_form1(h, psi, chi)
        t_jump = t_cur + sample_exponential(gamma_total, gen)
        while gi < n_grid and grid[gi] <= t_jump:
            dt = grid[gi] - t_cur
            snaps_psi.append(psi.copy())
            snaps_chi.append(chi * math.exp(gamma_total * dt))
            snaps_n.append(n_jumps)
            gi += 1
        if gi >= n_grid:
            break
        chi = chi * math.exp(gamma_total * (t_jump - t_cur))
        t_cur = t_jump
        alpha = sample_discrete(gamma, gen)
        psi, chi = _form1_jump(h, psi, chi, alpha)
        n_jumps += 1
        if records is not None:
            records.append(JumpRecord(t_cur, nu, alpha))
    return snaps_psi, snaps_chi, snaps_n


def run_trajectory_form1(
    h: InteractionHamiltonian,
    init: ProductPairState,
    t_grid,
    rng,
    records: list[JumpRecord] | None = None,
) -> list[ProductPairState]:
    """One trajectory, snapshotted at each grid time.

    The two product pairs evolve independently, each from its own RNG
    substream: pass an RngStream (roles 1 and 2 are derived here) or an
    explicit pair of generators.  Waiting times are exponential at the
    current per-pair total rate; no time discretization is involved.
    """
    grid = np.asarray(t_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be ascending and start at a nonnegative time")
    gen1, gen2 = _resolve_rng(rng)
    own_records: list[JumpRecord] | None = [] if records is not None else None
    p1, c1, n1 = _evolve_form1_component(h, init.psi[0], init.chi[0], grid, gen1, 1, own_records)
    p2, c2, n2 = _evolve_form1_component(h, init.psi[1], init.chi[1], grid, gen2, 2, own_records)
    if records is not None and own_records is not None:
        records.extend(sorted(own_records, key=lambda r: r.time))
    base = init.jump_counts
    return [
        ProductPairState((p1[i], p2[i]), (c1[i], c2[i]), (base[0] + n1[i], base[1] + n2[i]))
        for i in range(grid.size)
    ]


def _mean_stderr(samples: np.ndarray) -> RhoEstimate:
    from .stats import EnsembleAccumulator

    acc = EnsembleAccumulator.from_samples(samples)
    if acc.count == 1:
        return RhoEstimate(acc.mean_no_error(), np.full(samples.shape[1:], np.nan), 1)
    mean, stderr = acc.finalize()
    return RhoEstimate(mean, stderr, acc.count)


def estimate_rho_form1(snapshots) -> tuple[RhoEstimate, RhoEstimate]:
    """Total and reduced density-matrix estimates from same-time snapshots.

    Total: mean of |psi1 chi1><psi2 chi2|.  Reduced: mean of
    |psi1><psi2| <chi2|chi1>, the environment inner product replacing the
    partial trace.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("empty ensemble")
    totals = np.stack(
        [np.outer(np.kron(s.psi[0], s.chi[0]), np.kron(s.psi[1], s.chi[1]).conj()) for s in snapshots]
    )
    reduced = np.stack(
        [np.outer(s.psi[0], s.psi[1].conj()) * np.vdot(s.chi[1], s.chi[0]) for s in snapshots]
    )
    return _mean_stderr(totals), _mean_stderr(reduced)


@dataclass(frozen=True)
class Form2Rates:
    """Configured rates with the state-dependent jump-scale bookkeeping.

    l_scale holds L_anu = |psi_nu| / |A_a psi_nu| (inf where unreachable),
    m_scale the matching M_anu = 1/(L_anu Gamma_anu); reachable marks the
    pairs available for selection, whose rates sum to gamma_reachable per nu.
    """

    const_rates: np.ndarray
    l_scale: np.ndarray
    m_scale: np.ndarray
    reachable: np.ndarray
    gamma_total: float
    gamma_nu: np.ndarray


def rates_form2(h: InteractionHamiltonian, s: Form2State, cfg: Form2Config) -> Form2Rates:
    """Constant configured rates plus derived per-pair scales for the state."""
    rates = cfg.const_rates
    if rates.shape[0] != h.n_terms:
        raise ValueError("config rate rows must match the number of terms")
    l_scale = np.full((h.n_terms, 2), np.inf)
    m_scale = np.zeros((h.n_terms, 2))
    reachable = np.zeros((h.n_terms, 2), dtype=bool)
    for i in range(2):
        norms = np.linalg.norm(h._a_stack @ s.psi[i], axis=1)
        psi_norm = np.linalg.norm(s.psi[i])
        ok = (norms > 0.0) & (rates[:, i] > 0.0)
        reachable[:, i] = ok
        l_scale[ok, i] = psi_norm / norms[ok]
        m_scale[ok, i] = 1.0 / (l_scale[ok, i] * rates[ok, i])
    gamma_nu = rates.sum(axis=0)
    return Form2Rates(
        const_rates=rates,
        l_scale=l_scale,
        m_scale=m_scale,
        reachable=reachable,
        gamma_total=float(gamma_nu.sum()),
        gamma_nu=gamma_nu,
    )


def _form2_jump_pieces(h, psi, alpha: int, nu: int, cfg: Form2Config):
    """New psi_nu and the scaled environment factor for one jump."""
    rate = cfg.const_rates[alpha, nu - 1]
    a_psi = h.terms[alpha].a_op @ psi
    norm_a = np.linalg.norm(a_psi)
    if norm_a == 0.0 or rate == 0.0:
        raise ValueError("jump applied to an unreachable pair")
    l_scale = np.linalg.norm(psi) / norm_a
    m_scale = 1.0 / (l_scale * rate)
    new_psi = -1j * l_scale * a_psi
    b = h.terms[alpha].b_op
    factor = m_scale * (b if nu == 1 else b.conj().T)
    return new_psi, factor


def apply_jump_form2(
    h: InteractionHamiltonian, s: Form2State, alpha: int, nu: int, cfg: Form2Config
) -> Form2State:
    """Jump on psi_nu plus the matching one-sided action on R_E.

    nu=1 multiplies R_E from the left by M B, nu=2 from the right by
    M B-dagger; the scales keep |psi_nu| fixed and the estimator unbiased.
    """
    if nu not in (1, 2):
        raise ValueError("nu must be 1 or 2")
    i = nu - 1
    new_psi, factor = _form2_jump_pieces(h, s.psi[i], alpha, nu, cfg)
    psi = list(s.psi)
    psi[i] = new_psi
    r_env = factor @ s.r_env if nu == 1 else s.r_env @ factor
    counts = list(s.jump_counts)
    counts[i] += 1
    return Form2State(tuple(psi), r_env, tuple(counts), s.weight)


def _evolve_form2_component(h, psi, nu, cfg, grid, gen, records):
    """One sub-process: psi_nu jumps plus its one-sided factor product.

    Left (nu=1) and right (nu=2) actions on R_E commute with each other,
    so each side accumulates independently and the shared operator is
    assembled per grid time afterwards.
    """
    i = nu - 1
    rates = cfg.const_rates[:, i]
    gamma_nu = float(rates.sum())
    d_env = h.dE
    side = np.eye(d_env, dtype=np.complex128)
    weight = 1.0
    n_jumps = 0
    t_cur = 0.0
    gi = 0
    n_grid = len(grid)
    snaps = []
    while gi < n_grid:
        t_jump = t_cur + sample_exponential(gamma_nu, gen)
        while gi < n_grid and grid[gi] <= t_jump:
            snaps.append((psi.copy(), side.copy(), n_jumps, weight))
            gi += 1
        if gi >= n_grid:
            break
        t_cur = t_jump
        a_norms = np.linalg.norm(h._a_stack @ psi, axis=1)
        sel = np.where(a_norms > 0.0, rates, 0.0)
        gamma_reach = float(sel.sum())
        weight *= gamma_reach / gamma_nu
        if gamma_reach == 0.0:
            # nothing selectable: the trajectory's weight is now exactly 0
            # and stays 0, so freeze and emit the remaining snapshots
            while gi < n_grid:
                snaps.append((psi.copy(), side.copy(), n_jumps, 0.0))
                gi += 1
            break
        alpha = sample_discrete(sel, gen)
        psi, factor = _form2_jump_pieces(h, psi, alpha, nu, cfg)
        side = factor @ side if nu == 1 else side @ factor
        n_jumps += 1
        if records is not None:
            records.append(JumpRecord(t_cur, nu, alpha))
    return snaps


def run_trajectory_form2(
    h: InteractionHamiltonian,
    init: Form2State,
    cfg: Form2Config,
    t_grid,
    rng,
    records: list[JumpRecord] | None = None,
) -> list[Form2State]:
    """One operator-process trajectory, snapshotted at each grid time.

    Waiting times are exponential at the configured constant rates.  When
    some configured pair is unreachable in the current state, selection
    renormalizes over the reachable ones and the trajectory weight picks
    up the factor gamma_reachable/gamma_nu, keeping the mean unbiased.
    The scalar drift at the full configured rate is applied as e^{Gamma t}
    per snapshot since Gamma never changes.
    """
    grid = np.asarray(t_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be ascending and start at a nonnegative time")
    if cfg.const_rates.shape[0] != h.n_terms:
        raise ValueError("config rate rows must match the number of terms")
    gen1, gen2 = _resolve_rng(rng)
    own_records: list[JumpRecord] | None = [] if records is not None else None
    side1 = _evolve_form2_component(h, init.psi[0], 1, cfg, grid, gen1, own_records)
    side2 = _evolve_form2_component(h, init.psi[1], 2, cfg, grid, gen2, own_records)
    if records is not None and own_records is not None:
        records.extend(sorted(own_records, key=lambda r: r.time))
    gamma = cfg.gamma_total
    base = init.jump_counts
    out = []
    for k in range(grid.size):
        psi1, left, n1, w1 = side1[k]
        psi2, right, n2, w2 = side2[k]
        r_env = math.exp(gamma * grid[k]) * (left @ init.r_env @ right)
        out.append(
            Form2State(
                (psi1, psi2),
                r_env,
                (base[0] + n1, base[1] + n2),
                init.weight * w1 * w2,
            )
        )
    return out


def estimate_rho_form2(snapshots) -> tuple[RhoEstimate, RhoEstimate]:
    """Total and reduced estimates from same-time operator-process snapshots.

    Total: mean of w |psi1><psi2| (x) R_E.  Reduced: mean of
    w |psi1><psi2| tr R_E.  The likelihood weight w multiplies each sample.
    """
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("empty ensemble")
    totals = np.stack(
        [s.weight * kron(np.outer(s.psi[0], s.psi[1].conj()), s.r_env) for s in snapshots]
    )
    reduced = np.stack(
        [s.weight * np.outer(s.psi[0], s.psi[1].conj()) * np.trace(s.r_env) for s in snapshots]
    )
    return _mean_stderr(totals), _mean_stderr(reduced)


def _check_mixture(mixture, label: str) -> tuple[np.ndarray, list[np.ndarray]]:
    weights = []
    states = []
    for w, v in mixture:
        if w < 0:
            raise ValueError(f"negative weight in {label}")
        vec = as_cvector(v)
        if abs(np.linalg.norm(vec) - 1.0) > MIXTURE_TOL:
            raise ValueError(f"unnormalized state in {label}")
        weights.append(float(w))
        states.append(vec)
    if not weights:
        raise ValueError(f"empty {label}")
    if abs(math.fsum(weights) - 1.0) > MIXTURE_TOL:
        raise ValueError(f"{label} weights must sum to 1")
    return np.asarray(weights), states


def draw_initial_state(
    rhoS_mixture, rhoE, rng: np.random.Generator, form: int = 1
) -> ProductPairState | Form2State:
    """Draw one trajectory's initial condition.

    Form 1 draws psi from the system mixture and chi from the environment
    mixture, then sets both product pairs equal.  Form 2 draws psi the
    same way and installs the given environment matrix as R_E(0).
    """
    weights_s, states_s = _check_mixture(rhoS_mixture, "system mixture")
    psi = states_s[sample_discrete(weights_s, rng)]
    if form == 1:
        weights_e, states_e = _check_mixture(rhoE, "environment mixture")
        chi = states_e[sample_discrete(weights_e, rng)]
        return ProductPairState((psi.copy(), psi.copy()), (chi.copy(), chi.copy()))
    if form == 2:
        r_env = as_cmatrix(rhoE)
        return Form2State((psi.copy(), psi.copy()), r_env.copy())
    raise ValueError("form must be 1 or 2")


def initial_ensemble(
    rhoS_mixture, rhoE, n: int, rng, form: int = 1
) -> list[ProductPairState] | list[Form2State]:
    """n independent initial conditions from one RNG stream."""
    if n < 1:
        raise ValueError("ensemble size must be positive")
    gen = rng.derive(1).generator() if isinstance(rng, RngStream) else rng
    return [draw_initial_state(rhoS_mixture, rhoE, gen, form) for _ in range(n)]
