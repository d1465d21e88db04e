"""Infinite-bath Monte Carlo: factorial weights at constant rates.

In the large-bath limit the environment trace of the operator process
collapses to the moment rule <(J+ J-)^k> -> k! (N/2)^k, so a trajectory
is nothing but two event counts at rate sqrt(2) A each, weighted by
(-1)^k k! e^{Gamma t} when both counts are even (k their half-sum).  The
up-population estimate averages these weights and relaxes to 1 + g; the
coherence estimator turns out to carry identical weights, so both Bloch
observables ride on one sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ERFI_SUPPORT, RngStream
from .mc_finite import _counts_along_grid
from .runner import run_blocks
from .spinstar import g_inf, v3_inf, vpm_inf
from .stats import BlochCurve, EnsembleAccumulator

__all__ = [
    "K_MAX",
    "Pdp2Weight",
    "weight_infinite",
    "resummed_population_inf",
    "estimate_v3_inf_mc",
    "estimate_vpm_inf_mc",
]

# largest half-count the weight path accepts; Poisson tails put sampled
# trajectories above this only with probability ~1e-12 at At <= 2
K_MAX = 60


@dataclass(frozen=True)
class Pdp2Weight:
    """Signed log-magnitude form of one trajectory weight."""

    log_magnitude: float
    sign: int
    zero: bool

    def __post_init__(self) -> None:
        if self.zero:
            if self.sign != 0:
                raise ValueError("zero weight must carry sign 0")
        elif self.sign not in (-1, 1):
            raise ValueError("sign must be -1 or +1")

    @property
    def value(self) -> float:
        if self.zero:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)


def weight_infinite(n1: int, n2: int, coupling: float, t: float) -> Pdp2Weight:
    """Trajectory weight (-1)^k k! e^{2 sqrt(2) A t}, zero for odd counts."""
    if n1 < 0 or n2 < 0:
        raise ValueError("counts must be nonnegative")
    if n1 % 2 or n2 % 2:
        return Pdp2Weight(log_magnitude=-math.inf, sign=0, zero=True)
    k = (n1 + n2) // 2
    if k > K_MAX:
        raise RuntimeError(f"half-count {k} exceeds the safe weight range {K_MAX}")
    gamma = 2.0 * math.sqrt(2.0) * coupling
    return Pdp2Weight(
        log_magnitude=math.lgamma(k + 1) + gamma * t,
        sign=-1 if k % 2 else 1,
        zero=False,
    )


def resummed_population_inf(coupling: float, t: float, n_max: int = 40) -> float:
    """Truncated double-Poisson average of the weights, analytically.

    sum over even n1, n2 <= n_max of the two Poisson laws at mean
    sqrt(2) A t times the signed weight; the drift magnitude cancels the
    Poisson normalizations.  Converges to 1 + g(sqrt(2) A t); the
    remainder at n_max = 40 is far below 1e-8 for At <= 1.
    """
    lam = math.sqrt(2.0) * coupling * t
    if lam == 0.0:
        return 1.0
    log_lam = math.log(lam)
    terms = []
    for n1 in range(0, n_max + 1, 2):
        for n2 in range(0, n_max + 1, 2):
            k = (n1 + n2) // 2
            log_term = (
                (n1 + n2) * log_lam
                - math.lgamma(n1 + 1)
                - math.lgamma(n2 + 1)
                + math.lgamma(k + 1)
            )
            terms.append((-1.0 if k % 2 else 1.0) * math.exp(log_term))
    return math.fsum(terms)


@dataclass(frozen=True)
class _InfiniteBlock:
    """Picklable block task: two constant-rate streams, factorial weights."""

    rate: float
    gamma: float
    grid: np.ndarray
    seed: int

    def __call__(self, start: int, stop: int) -> list[EnsembleAccumulator]:
        n_grid = self.grid.size
        b = stop - start
        counts1 = np.empty((b, n_grid), dtype=np.int64)
        counts2 = np.empty((b, n_grid), dtype=np.int64)
        for i in range(start, stop):
            stream = RngStream(self.seed, 8 * i)
            counts1[i - start] = _counts_along_grid(
                stream.derive(1).generator(), self.rate, self.grid
            )
            counts2[i - start] = _counts_along_grid(
                stream.derive(2).generator(), self.rate, self.grid
            )
        k = (counts1 + counts2) // 2
        if k.max(initial=0) > K_MAX:
            raise RuntimeError(f"half-count {k.max()} exceeds the safe weight range {K_MAX}")
        both_even = (counts1 % 2 == 0) & (counts2 % 2 == 0)
        sign = 1.0 - 2.0 * (k % 2)
        log_mag = _LGAMMA_TABLE[k] + self.gamma * self.grid[None, :]
        samples = np.where(both_even, sign * np.exp(log_mag), 0.0).astype(np.complex128)
        return [EnsembleAccumulator.from_samples(samples[:, j]) for j in range(n_grid)]


_LGAMMA_TABLE = np.array([math.lgamma(k + 1) for k in range(K_MAX + 1)])


def _run_population(coupling: float, n_traj: int, t_grid, seed: int, workers: int):
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories for standard errors")
    if not (coupling > 0 and math.isfinite(coupling)):
        raise ValueError("coupling must be positive and finite")
    grid = np.asarray(t_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be ascending and start at a nonnegative time")
    if math.sqrt(2.0) * coupling * grid[-1] > ERFI_SUPPORT:
        raise ValueError("grid exceeds the relaxation function's support")
    rate = math.sqrt(2.0) * coupling
    task = _InfiniteBlock(rate=rate, gamma=2.0 * rate, grid=grid, seed=seed)
    accs = run_blocks(task, n_traj, workers)
    means = np.empty(grid.size, dtype=np.complex128)
    errs = np.empty(grid.size, dtype=np.float64)
    for j, acc in enumerate(accs):
        mean, stderr = acc.finalize()
        means[j] = mean
        errs[j] = stderr
    return grid, means, errs


def estimate_v3_inf_mc(
    coupling: float, n_traj: int, t_grid, seed: int, workers: int = 1
) -> BlochCurve:
    """Longitudinal Bloch component against 1 + 2g.

    The sampler estimates the up-population 1 + g; v3 = 2 population - 1
    maps every sample affinely, so mean and standard error transform
    exactly and the v3/coherence estimates from one seed stay locked to
    v3 = 2 vpm - 1.
    """
    grid, means, errs = _run_population(coupling, n_traj, t_grid, seed, workers)
    exact = np.array([v3_inf(coupling, t) for t in grid], dtype=np.complex128)
    return BlochCurve(times=grid, estimate=2.0 * means - 1.0, stderr=2.0 * errs, exact=exact)


def estimate_vpm_inf_mc(
    coupling: float, n_traj: int, t_grid, seed: int, workers: int = 1
) -> BlochCurve:
    """Unit-initial coherence against 1 + g; same weights as the population."""
    grid, means, errs = _run_population(coupling, n_traj, t_grid, seed, workers)
    exact = np.array([vpm_inf(coupling, t) for t in grid], dtype=np.complex128)
    return BlochCurve(times=grid, estimate=means, stderr=errs, exact=exact)
