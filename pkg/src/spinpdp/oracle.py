"""Exact reference dynamics on the full composite Hilbert space.

Diagonalize once, propagate anywhere: the composed Hamiltonian is small
enough to eigendecompose, after which the state at any time is exact to
rounding.  The bath lives in the computational product basis throughout,
deliberately ignorant of any collective-sector structure, so agreement
with the closed-form module is a genuine cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_cmatrix, herm_eig, kron, partial_trace_env
from .spinstar import BlochVector, SpinStarParams
from .stats import BlochCurve

__all__ = [
    "ComposedModel",
    "spinstar_terms",
    "build_spinstar",
    "evolve_exact",
    "reduced_states",
    "reduced_bloch",
]

MAX_ORACLE_BATH = 12
DENSITY_TOL = 1e-10

_PAULI_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)


def _collective_lowering(n_bath: int) -> np.ndarray:
    """Sum of single-spin lowering operators on the 2^n product space."""
    dim = 2**n_bath
    out = np.zeros((dim, dim), dtype=np.complex128)
    lower = _PAULI_PLUS.conj().T
    for k in range(n_bath):
        op = np.eye(1, dtype=np.complex128)
        for i in range(n_bath):
            op = kron(op, lower if i == k else np.eye(2, dtype=np.complex128))
        out += op
    return out


def spinstar_terms(params: SpinStarParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Product terms (A_alpha, B_alpha) whose sum is the coupling Hamiltonian.

    Returns [(sigma_plus, c J_minus), (sigma_minus, c J_plus)] with
    c = 2A/sqrt(N), bath operators on the full 2^N product space.
    """
    if params.n_bath > MAX_ORACLE_BATH:
        raise ValueError(f"n_bath > {MAX_ORACLE_BATH} exceeds exact-diagonalization range")
    c = 2.0 * params.coupling / math.sqrt(params.n_bath)
    j_minus = _collective_lowering(params.n_bath)
    return [
        (_PAULI_PLUS.copy(), c * j_minus),
        (_PAULI_PLUS.conj().T, c * j_minus.conj().T),
    ]


@dataclass
class ComposedModel:
    """Hermitian Hamiltonian on a system x environment space, dim dS*dE."""

    h_total: np.ndarray
    dS: int
    dE: int
    _eig: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        h = as_cmatrix(self.h_total)
        if self.dS < 1 or self.dE < 1 or h.shape != (self.dS * self.dE,) * 2:
            raise ValueError("h_total must be square with dim dS*dE")
        self.h_total = h

    @property
    def dim(self) -> int:
        return self.dS * self.dE

    @property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvectors, computed once (Hermiticity checked here)."""
        if self._eig is None:
            self._eig = herm_eig(self.h_total)
        return self._eig


def build_spinstar(params: SpinStarParams) -> ComposedModel:
    """Composite spin-star Hamiltonian (2A/sqrt(N))(s+ J- + s- J+)."""
    terms = spinstar_terms(params)
    dim_env = 2**params.n_bath
    h = np.zeros((2 * dim_env, 2 * dim_env), dtype=np.complex128)
    for a, b in terms:
        h += kron(a, b)
    return ComposedModel(h, dS=2, dE=dim_env)


def _check_density(rho: np.ndarray, dim: int) -> np.ndarray:
    r = as_cmatrix(rho)
    if r.shape != (dim, dim):
        raise ValueError(f"density matrix must be {dim}x{dim}")
    if np.abs(r - r.conj().T).max() > DENSITY_TOL:
        raise ValueError("density matrix not Hermitian")
    if abs(np.trace(r) - 1.0) > DENSITY_TOL:
        raise ValueError("density matrix trace != 1")
    if np.linalg.eigvalsh(r).min() < -DENSITY_TOL:
        raise ValueError("density matrix not positive semidefinite")
    return r


def evolve_exact(model: ComposedModel, rho0, t: float) -> np.ndarray:
    """rho(t) = U e^{-i L t} U+ rho0 U e^{+i L t} U+ from the cached eigensystem."""
    r0 = _check_density(rho0, model.dim)
    lam, u = model.eig
    phase = np.exp(-1j * lam * float(t))
    m = (u * phase) @ u.conj().T
    return m @ r0 @ m.conj().T


def reduced_states(model: ComposedModel, rho0, t_grid) -> np.ndarray:
    """System reduced density matrices along a time grid, shape (nt, dS, dS)."""
    r0 = _check_density(rho0, model.dim)
    times = np.asarray(t_grid, dtype=np.float64)
    if times.ndim != 1:
        raise ValueError("t_grid must be one-dimensional")
    lam, u = model.eig
    uh = u.conj().T
    out = np.empty((times.size, model.dS, model.dS), dtype=np.complex128)
    for i, t in enumerate(times):
        m = (u * np.exp(-1j * lam * t)) @ uh
        out[i] = partial_trace_env(m @ r0 @ m.conj().T, model.dS, model.dE)
    return out


_OBSERVABLES = {
    "v3": lambda b: complex(b.v3),
    "v1": lambda b: complex(b.v1),
    "v2": lambda b: complex(b.v2),
    "vminus": lambda b: b.vminus,
    "vplus": lambda b: b.vplus,
}


def reduced_bloch(model: ComposedModel, rho0, t_grid, observable: str = "v3") -> BlochCurve:
    """Exact Bloch-component curve for a two-level system, zero error bars."""
    if model.dS != 2:
        raise ValueError("Bloch components need a two-level system")
    if observable not in _OBSERVABLES:
        raise ValueError(f"unknown observable: {observable!r}")
    pick = _OBSERVABLES[observable]
    reduced = reduced_states(model, rho0, t_grid)
    values = np.array(
        [pick(BlochVector.from_density_matrix(r)) for r in reduced], dtype=np.complex128
    )
    times = np.asarray(t_grid, dtype=np.float64)
    return BlochCurve(times=times, estimate=values, stderr=np.zeros(times.size))
