"""Dense complex linear algebra, special functions, and sampling primitives.

Everything here is a pure function of its inputs plus, where noted, an
explicitly passed random stream.  Matrices and vectors are plain numpy
arrays of complex128; no wrapper types are introduced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HERM_TOL",
    "EIG_RESIDUAL_TOL",
    "ERFI_SUPPORT",
    "ERFI_REL_TOL",
    "RngStream",
    "kron",
    "partial_trace_env",
    "herm_eig",
    "erfi",
    "erfi_series_terms",
    "log_binomial",
    "sample_exponential",
    "sample_discrete",
    "as_cmatrix",
    "as_cvector",
]

# Tolerances are module constants; every consumer can override them per call.
HERM_TOL = 1e-10
EIG_RESIDUAL_TOL = 1e-9
ERFI_SUPPORT = 10.0
ERFI_REL_TOL = 1e-12

NEVER = math.inf


def as_cmatrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d complex128 array, copying if needed."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_cvector(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-d complex128 array."""
    a = np.asarray(v, dtype=np.complex128)
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-dimensional array")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def kron(a, b) -> np.ndarray:
    """Kronecker product of two dense complex matrices.

    Entry ((i*b_rows + k), (j*b_cols + l)) equals a[i, j] * b[k, l].
    """
    return np.kron(as_cmatrix(a, "a"), as_cmatrix(b, "b"))


def partial_trace_env(m, d_sys: int, d_env: int) -> np.ndarray:
    """Trace out the environment factor of a (d_sys*d_env)-dim operator.

    Parameters
    ----------
    m : array_like
        Square matrix on the composite space, ordered system-major
        (row index i*d_env + k for system i, environment k).
    d_sys, d_env : int
        Factor dimensions.

    Returns
    -------
    numpy.ndarray
        d_sys x d_sys matrix with entry (i, j) = sum_k m[i*d_env+k, j*d_env+k].
    """
    a = as_cmatrix(m, "m")
    d = d_sys * d_env
    if a.shape != (d, d):
        raise ValueError(f"expected shape ({d}, {d}), got {a.shape}")
    return np.einsum("ikjk->ij", a.reshape(d_sys, d_env, d_sys, d_env))


def herm_eig(m, tol: float = HERM_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, unitary of column eigenvectors).
    Raises ValueError if the input deviates from Hermiticity by more
    than `tol` entrywise, and RuntimeError if LAPACK fails to converge.
    """
    a = as_cmatrix(m, "m")
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    defect = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if defect > tol:
        raise ValueError(f"matrix is not Hermitian: max |m - m^H| = {defect:.3e} > {tol:.1e}")
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed to converge: {exc}") from exc
    return w, u


def erfi(x: float, n_terms: int | None = None, support: float = ERFI_SUPPORT) -> float:
    """Imaginary error function via its defining power series.

    (2/sqrt(pi)) * sum_{k>=0} x^(2k+1) / (k! (2k+1)), summed with exact
    compensated accumulation (math.fsum).  All terms share the sign of x,
    so there is no cancellation and the result is correct to ~1e-15
    relative on |x| <= `support`.

    Parameters
    ----------
    x : float
        Argument; |x| must not exceed `support` (default 10).
    n_terms : int, optional
        Fixed term count.  Default: sum until terms fall below 1e-17
        relative to the running total.

    Returns
    -------
    float
    """
    if not math.isfinite(x):
        raise ValueError("erfi argument must be finite")
    if abs(x) > support:
        raise ValueError(f"erfi support is |x| <= {support}, got {x}")
    if x == 0.0:
        return 0.0
    terms = erfi_series_terms(x, n_terms)
    return (2.0 / math.sqrt(math.pi)) * math.fsum(terms)


def erfi_series_terms(x: float, n_terms: int | None = None) -> list[float]:
    """Terms x^(2k+1)/(k!(2k+1)) of the erfi series, for k = 0, 1, ...

    With n_terms=None the series is cut adaptively once terms drop below
    1e-17 of the accumulated magnitude.  Exposed so tests can compare
    fixed-length truncations (150 vs 200 terms).
    """
    x2 = x * x
    terms = [x]
    power = x  # x^(2k+1) / k!
    total = abs(x)
    k = 0
    while True:
        k += 1
        if n_terms is not None and k >= n_terms:
            break
        power *= x2 / k
        term = power / (2 * k + 1)
        terms.append(term)
        total += abs(term)
        if n_terms is None:
            if abs(term) <= 1e-17 * total and k > 4:
                break
            if k > 500:  # unreachable on the supported domain
                raise RuntimeError("erfi series failed to converge")
    return terms


def log_binomial(n: int, k: int) -> float:
    """ln C(n, k) for integer n >= 0; -inf for k outside [0, n].

    The -inf marker lets vanishing binomials compose cleanly inside
    log-space probability formulas.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Distinct (seed, stream_id) pairs give statistically independent
    streams, and a stream's draw sequence depends on nothing else, so
    Monte Carlo runs are reproducible independent of worker scheduling.
    Backed by the Philox counter-based bit generator.

    Monte Carlo code assigns stream_id = trajectory_index * 8 + role,
    with role 1 for the first sub-process and role 2 for the second;
    `derive` applies that convention.
    """

    seed: int
    stream_id: int

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if not (0 <= self.stream_id < 2**64):
            raise ValueError("stream_id must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, role: int) -> "RngStream":
        """Substream `role` (0..7) of a trajectory-level stream."""
        if not (0 <= role < 8):
            raise ValueError("role must be in 0..7")
        return RngStream(self.seed, self.stream_id * 8 + role)


def sample_exponential(rate: float, rng: np.random.Generator) -> float:
    """Exponential waiting time with mean 1/rate; inf ("never") at rate 0."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rate == 0.0:
        return NEVER
    return rng.standard_exponential() / rate


def sample_discrete(weights, rng: np.random.Generator) -> int:
    """Draw index i with probability weights[i] / sum(weights).

    Inverse-CDF draw consuming exactly one uniform.  Weights must be
    finite and nonnegative with a positive sum.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty 1-d array")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("at least one weight must be positive")
    u = rng.random() * total
    acc = 0.0
    for i, wi in enumerate(w):
        acc += wi
        if u < acc:
            return i
    return int(np.flatnonzero(w > 0)[-1])  # u landed on the rounding edge
