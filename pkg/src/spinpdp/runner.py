"""Block-parallel ensemble execution with a deterministic merge order.

Trajectories are independent, so ensembles shard freely.  Output bytes
must not depend on the worker count, which pins the whole reduction
strategy: trajectories are grouped into fixed-size blocks, each block is
folded into accumulators by the canonical pairwise tree, and block
results merge in index order no matter which worker produced them.
Trajectory i always draws from the RNG streams derived from (seed, i),
so the sample values themselves are partition-independent too.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

from .engine import (
    Form2Config,
    InteractionHamiltonian,
    _check_mixture,
    _evolve_form1_component,
    _evolve_form2_component,
)
from .numerics import RngStream, as_cmatrix, sample_discrete
from .stats import EnsembleAccumulator

__all__ = [
    "BLOCK_SIZE",
    "iter_blocks",
    "run_blocks",
    "run_form1_ensemble",
    "run_form2_ensemble",
]

BLOCK_SIZE = 4096


def iter_blocks(n_items: int) -> list[tuple[int, int]]:
    """Fixed-size index ranges covering 0..n_items, last one ragged."""
    if n_items < 1:
        raise ValueError("need at least one item")
    return [(s, min(s + BLOCK_SIZE, n_items)) for s in range(0, n_items, BLOCK_SIZE)]


def run_blocks(task, n_items: int, workers: int = 1) -> list[EnsembleAccumulator]:
    """Map a block task over the index range and merge results in order.

    The task is a picklable callable (start, stop) -> list of
    EnsembleAccumulator, one per tracked output (e.g. per grid time).
    Merging block b into the running accumulators is equivalent to having
    updated them sample-by-sample in index order, so any worker count
    yields bit-identical statistics.
    """
    blocks = iter_blocks(n_items)
    if workers < 1:
        raise ValueError("workers must be positive")
    if workers == 1 or len(blocks) == 1:
        results = map(_call_task, [(task, b) for b in blocks])
    else:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_call_task, [(task, b) for b in blocks], chunksize=1)
    merged: list[EnsembleAccumulator] | None = None
    for brs in results:
        if merged is None:
            merged = brs
        else:
            for acc, extra in zip(merged, brs, strict=True):
                acc.merge(extra)
    assert merged is not None
    return merged


def _call_task(packed):
    task, (start, stop) = packed
    return task(start, stop)


def _prepare_mixture(mixture, label: str):
    weights, states = _check_mixture(mixture, label)
    return weights, np.stack(states)


def _accumulate_block(samples: np.ndarray) -> list[EnsembleAccumulator]:
    """Per-grid-time canonical accumulators from a (B, T, ...) sample array."""
    return [EnsembleAccumulator.from_samples(samples[:, k]) for k in range(samples.shape[1])]


@dataclass(frozen=True)
class _Form1Block:
    """Picklable block task: form-1 trajectories reduced to dS x dS samples."""

    h: InteractionHamiltonian
    sys_weights: np.ndarray
    sys_states: np.ndarray
    env_weights: np.ndarray
    env_states: np.ndarray
    grid: np.ndarray
    seed: int

    def __call__(self, start: int, stop: int) -> list[EnsembleAccumulator]:
        n_grid = self.grid.size
        ds = self.h.dS
        samples = np.empty((stop - start, n_grid, ds, ds), dtype=np.complex128)
        for i in range(start, stop):
            stream = RngStream(self.seed, 8 * i)
            gen1 = stream.derive(1).generator()
            gen2 = stream.derive(2).generator()
            psi = self.sys_states[sample_discrete(self.sys_weights, gen1)]
            chi = self.env_states[sample_discrete(self.env_weights, gen1)]
            p1, c1, _ = _evolve_form1_component(self.h, psi, chi, self.grid, gen1, 1, None)
            p2, c2, _ = _evolve_form1_component(self.h, psi, chi, self.grid, gen2, 2, None)
            for k in range(n_grid):
                samples[i - start, k] = np.outer(p1[k], p2[k].conj()) * np.vdot(c2[k], c1[k])
        return _accumulate_block(samples)


@dataclass(frozen=True)
class _Form2Block:
    """Picklable block task: form-2 trajectories reduced to dS x dS samples."""

    h: InteractionHamiltonian
    sys_weights: np.ndarray
    sys_states: np.ndarray
    env_matrix: np.ndarray
    cfg: Form2Config
    grid: np.ndarray
    seed: int

    def __call__(self, start: int, stop: int) -> list[EnsembleAccumulator]:
        n_grid = self.grid.size
        ds = self.h.dS
        gamma = self.cfg.gamma_total
        drift = np.exp(gamma * self.grid)
        samples = np.empty((stop - start, n_grid, ds, ds), dtype=np.complex128)
        for i in range(start, stop):
            stream = RngStream(self.seed, 8 * i)
            gen1 = stream.derive(1).generator()
            gen2 = stream.derive(2).generator()
            psi = self.sys_states[sample_discrete(self.sys_weights, gen1)]
            side1 = _evolve_form2_component(self.h, psi, 1, self.cfg, self.grid, gen1, None)
            side2 = _evolve_form2_component(self.h, psi, 2, self.cfg, self.grid, gen2, None)
            for k in range(n_grid):
                psi1, left, _, w1 = side1[k]
                psi2, right, _, w2 = side2[k]
                tr = np.trace(left @ self.env_matrix @ right)
                samples[i - start, k] = (
                    (w1 * w2 * drift[k] * tr) * np.outer(psi1, psi2.conj())
                )
        return _accumulate_block(samples)


def run_form1_ensemble(
    h: InteractionHamiltonian,
    sys_mixture,
    env_mixture,
    t_grid,
    n_traj: int,
    seed: int,
    workers: int = 1,
) -> list[EnsembleAccumulator]:
    """Reduced density-matrix accumulators per grid time, form-1 process.

    Each trajectory draws its initial product state and both event
    streams from its own counter-based RNG streams, making the ensemble
    embarrassingly parallel and exactly reproducible.
    """
    grid = _check_grid(t_grid)
    sw, ss = _prepare_mixture(sys_mixture, "system mixture")
    ew, es = _prepare_mixture(env_mixture, "environment mixture")
    task = _Form1Block(h, sw, ss, ew, es, grid, seed)
    return run_blocks(task, n_traj, workers)


def run_form2_ensemble(
    h: InteractionHamiltonian,
    sys_mixture,
    env_matrix,
    cfg: Form2Config,
    t_grid,
    n_traj: int,
    seed: int,
    workers: int = 1,
) -> list[EnsembleAccumulator]:
    """Reduced density-matrix accumulators per grid time, form-2 process."""
    grid = _check_grid(t_grid)
    sw, ss = _prepare_mixture(sys_mixture, "system mixture")
    env = as_cmatrix(env_matrix)
    if env.shape != (h.dE, h.dE):
        raise ValueError("environment matrix dimension mismatch")
    task = _Form2Block(h, sw, ss, env, cfg, grid, seed)
    return run_blocks(task, n_traj, workers)


def _check_grid(t_grid) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be ascending and start at a nonnegative time")
    return grid
