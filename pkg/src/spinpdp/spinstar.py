"""Closed-form dynamics of a central spin coupled to an unpolarized spin bath.

The bath decomposes into invariant sectors labeled by collective quantum
numbers (j, m).  Everything downstream needs three ingredients computed
here: the sector probabilities P(j, m), the sector rates Gamma(j, m), and
the cosine-sum solutions for the central spin's Bloch components, both at
finite bath size and in the infinite-bath limit where the relaxation
function g takes over.

Half-integer quantum numbers are stored as doubled integers (j2 = 2j,
m2 = 2m) so sector arithmetic stays exact for odd bath sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .numerics import ERFI_SUPPORT, erfi, log_binomial

__all__ = [
    "SpinStarParams",
    "BathSector",
    "SectorDistribution",
    "BlochVector",
    "prob_jm",
    "sector_distribution",
    "gamma_jm",
    "gamma_arrays",
    "v3_finite",
    "vpm_finite",
    "closed_form_population",
    "closed_form_coherence",
    "g_inf",
    "g_inf_series",
    "v3_inf",
    "vpm_inf",
]

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class SpinStarParams:
    """Bath size N and coupling strength A (units of inverse time)."""

    n_bath: int
    coupling: float

    def __post_init__(self) -> None:
        if not isinstance(self.n_bath, int) or self.n_bath < 1:
            raise ValueError("n_bath must be a positive integer")
        if not (self.coupling > 0 and math.isfinite(self.coupling)):
            raise ValueError("coupling must be positive and finite")


@dataclass(frozen=True)
class BathSector:
    """Collective quantum numbers as doubled integers j2 = 2j, m2 = 2m."""

    j2: int
    m2: int

    def __post_init__(self) -> None:
        if self.j2 < 0:
            raise ValueError("j2 must be nonnegative")
        if abs(self.m2) > self.j2:
            raise ValueError("|m2| must not exceed j2")
        if (self.m2 - self.j2) % 2 != 0:
            raise ValueError("m2 must have the same parity as j2")

    def check_against(self, n_bath: int) -> None:
        if self.j2 > n_bath or (self.j2 - n_bath) % 2 != 0:
            raise ValueError(f"sector (j2={self.j2}, m2={self.m2}) invalid for n_bath={n_bath}")


@dataclass(frozen=True)
class SectorDistribution:
    """All (j, m) sectors of a bath with their probabilities.

    Enumeration order is descending j, ascending m; `entries` preserves
    it, and the flat arrays (j2s, m2s, probs) are index-aligned with it
    for vectorized sampling.
    """

    sectors: tuple[BathSector, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (len(self.sectors),):
            raise ValueError("probs must align with sectors")
        if np.any(p < 0):
            raise ValueError("negative sector probability")
        if abs(math.fsum(p.tolist()) - 1.0) > NORMALIZATION_TOL:
            raise ValueError("sector probabilities do not sum to 1")
        if len(set(self.sectors)) != len(self.sectors):
            raise ValueError("duplicate sectors")
        object.__setattr__(self, "probs", p)

    @property
    def entries(self) -> list[tuple[BathSector, float]]:
        return list(zip(self.sectors, self.probs.tolist()))

    @property
    def j2s(self) -> np.ndarray:
        return np.array([s.j2 for s in self.sectors], dtype=np.int64)

    @property
    def m2s(self) -> np.ndarray:
        return np.array([s.m2 for s in self.sectors], dtype=np.int64)


@dataclass(frozen=True)
class BlochVector:
    """Bloch components of a 2x2 density matrix; v_pm = (v1 +- i v2)/2."""

    v1: float
    v2: float
    v3: float

    @classmethod
    def from_density_matrix(cls, rho) -> "BlochVector":
        r = np.asarray(rho, dtype=np.complex128)
        if r.shape != (2, 2):
            raise ValueError("expected a 2x2 density matrix")
        return cls(
            v1=float((r[0, 1] + r[1, 0]).real),
            v2=float((r[0, 1] - r[1, 0]).imag * -1.0),
            v3=float((r[0, 0] - r[1, 1]).real),
        )

    @property
    def vplus(self) -> complex:
        return complex(self.v1, self.v2) / 2.0

    @property
    def vminus(self) -> complex:
        return complex(self.v1, -self.v2) / 2.0

    @property
    def norm(self) -> float:
        return math.sqrt(self.v1**2 + self.v2**2 + self.v3**2)


@lru_cache(maxsize=32)
def _log_sector_weights(n_bath: int) -> tuple[float, ...]:
    """ln P(j, m) for j2 = n_bath, n_bath-2, ..., down to 0 or 1.

    P(j, m) = 2^-N [C(N, N/2+j) - C(N, N/2+j+1)], m-independent.  The
    adjacent-binomial difference collapses exactly to
    C(N, (N+j2)/2) * (j2+1) / ((N+j2)/2 + 1), a single product safe to
    take logs of (the direct difference cancels catastrophically near
    j = 0 for large N).
    """
    out = []
    for j2 in range(n_bath, -1, -2):
        k = (n_bath + j2) // 2
        log_p = (
            log_binomial(n_bath, k)
            - n_bath * math.log(2.0)
            + math.log(j2 + 1.0)
            - math.log(k + 1.0)
        )
        out.append(log_p)
    return tuple(out)


def _j2_values(n_bath: int) -> range:
    return range(n_bath, -1, -2) if n_bath % 2 == 0 else range(n_bath, 0, -2)


def prob_jm(params: SpinStarParams, sector: BathSector) -> float:
    """Probability of bath sector (j, m) in the fully unpolarized bath."""
    sector.check_against(params.n_bath)
    weights = _log_sector_weights(params.n_bath)
    idx = (params.n_bath - sector.j2) // 2
    return math.exp(weights[idx])


def sector_distribution(params: SpinStarParams) -> SectorDistribution:
    """Enumerate every sector with its probability.

    Intended for enumeration-scale baths (the Monte Carlo samplers and
    the N <= 200 normalization checks); the curve functions below sum
    over sectors without materializing this object.
    """
    sectors: list[BathSector] = []
    probs: list[float] = []
    weights = _log_sector_weights(params.n_bath)
    for j2 in _j2_values(params.n_bath):
        p = math.exp(weights[(params.n_bath - j2) // 2])
        for m2 in range(-j2, j2 + 1, 2):
            sectors.append(BathSector(j2, m2))
            probs.append(p)
    return SectorDistribution(tuple(sectors), np.array(probs))


def gamma_jm(params: SpinStarParams, sector: BathSector) -> float:
    """Sector jump rate 2A sqrt((j(j+1) - m(m+1))/N).

    Evaluated from the doubled integers as
    2A sqrt((j2(j2+2) - m2(m2+2)) / (4N)); the integer core is exact, so
    m = j gives exactly 0.
    """
    sector.check_against(params.n_bath)
    core = sector.j2 * (sector.j2 + 2) - sector.m2 * (sector.m2 + 2)
    return 2.0 * params.coupling * math.sqrt(core / (4.0 * params.n_bath))


def gamma_arrays(params: SpinStarParams, j2s: np.ndarray, m2s: np.ndarray) -> np.ndarray:
    """Vectorized gamma_jm over aligned doubled-integer arrays."""
    j2 = np.asarray(j2s, dtype=np.int64)
    m2 = np.asarray(m2s, dtype=np.int64)
    core = j2 * (j2 + 2) - m2 * (m2 + 2)
    if np.any(core < 0):
        raise ValueError("invalid sector arrays")
    return 2.0 * params.coupling * np.sqrt(core / (4.0 * params.n_bath))


def _sector_cosine_sum(params: SpinStarParams, term) -> float:
    """sum_{j,m} P(j,m) * term(gamma_m_array, gamma_negm_array) per j block.

    Iterates j values and vectorizes over m, so large baths (N ~ 10^4)
    never materialize the full sector list.
    """
    n = params.n_bath
    weights = _log_sector_weights(n)
    pieces = []
    for j2 in _j2_values(n):
        p = math.exp(weights[(n - j2) // 2])
        m2 = np.arange(-j2, j2 + 1, 2, dtype=np.int64)
        g_m = gamma_arrays(params, np.full_like(m2, j2), m2)
        g_negm = gamma_arrays(params, np.full_like(m2, j2), -m2)
        pieces.append(p * math.fsum(term(g_m, g_negm).tolist()))
    return math.fsum(pieces)


def v3_finite(params: SpinStarParams, t: float, v3_0: float = 1.0) -> float:
    """Longitudinal Bloch component: v3_0 sum_{j,m} P(j,m) cos(2 Gamma(j,m) t)."""
    return v3_0 * _sector_cosine_sum(params, lambda g, gn: np.cos(2.0 * g * t))


def vpm_finite(params: SpinStarParams, t: float, vpm_0: complex = 1.0) -> complex:
    """Coherence: vpm_0 sum_{j,m} P(j,m) cos(Gamma(j,m) t) cos(Gamma(j,-m) t)."""
    return vpm_0 * _sector_cosine_sum(params, lambda g, gn: np.cos(g * t) * np.cos(gn * t))


def closed_form_population(params: SpinStarParams, t: float) -> float:
    """Exact expectation of the finite-bath population estimator.

    sum_{j,m} P(j,m) cos^2(Gamma(j,m) t); equals (1 + v3_finite)/2 with
    v3_0 = 1.
    """
    return _sector_cosine_sum(params, lambda g, gn: np.cos(g * t) ** 2)


def closed_form_coherence(params: SpinStarParams, t: float) -> float:
    """Exact expectation of the finite-bath coherence estimator.

    sum_{j,m} P(j,m) cos(Gamma(j,m) t) cos(Gamma(j,-m) t); the real part
    of vpm_finite with unit initial coherence.
    """
    return _sector_cosine_sum(params, lambda g, gn: np.cos(g * t) * np.cos(gn * t))


def g_inf(x: float, method: str = "erfi") -> float:
    """Infinite-bath relaxation function.

    Product form -(sqrt(pi)/2) x e^{-x^2} erfi(x) by default; the
    alternating power series sum_{k>=1} (-1)^k k!/(2(2k)!) (2x)^{2k} is
    exposed as method="series" for cross-validation.
    """
    if not math.isfinite(x):
        raise ValueError("g_inf argument must be finite")
    if abs(x) > ERFI_SUPPORT:
        raise ValueError(f"g_inf support is |x| <= {ERFI_SUPPORT}")
    if method == "erfi":
        if x == 0.0:
            return 0.0
        return -0.5 * math.sqrt(math.pi) * x * math.exp(-x * x) * erfi(x)
    if method == "series":
        return g_inf_series(x)
    raise ValueError(f"unknown g_inf method: {method!r}")


def g_inf_series(x: float) -> float:
    """Series path of g_inf, summed in exact rational arithmetic.

    The terms alternate and peak near k = x^2 at magnitude ~ e^{x^2}, so
    float summation would lose digits to cancellation; Fractions keep
    the partial sums exact and only the final conversion rounds.
    """
    if x == 0.0:
        return 0.0
    fx = Fraction(x)
    four_x2 = 4 * fx * fx
    term = -four_x2 / 4  # k = 1: -(1!/(2*2!)) (2x)^2
    total = term
    k = 1
    while True:
        k += 1
        term = term * four_x2 * (-k) / ((2 * k - 1) * (2 * k))
        total += term
        ratio = float(four_x2) * (k + 1) / ((2 * k + 1) * (2 * k + 2))
        if ratio < 0.9 and abs(float(term)) < 1e-18 * max(1.0, abs(float(total))):
            break
        if k > 4000:
            raise RuntimeError("series failed to converge")
    return float(total)


def v3_inf(coupling: float, t: float, v3_0: float = 1.0) -> float:
    """Infinite-bath longitudinal component v3_0 (1 + 2 g(sqrt(2) A t))."""
    x = math.sqrt(2.0) * coupling * t
    return v3_0 * (1.0 + 2.0 * g_inf(x))


def vpm_inf(coupling: float, t: float, vpm_0: complex = 1.0) -> complex:
    """Infinite-bath coherence vpm_0 (1 + g(sqrt(2) A t))."""
    x = math.sqrt(2.0) * coupling * t
    return vpm_0 * (1.0 + g_inf(x))
