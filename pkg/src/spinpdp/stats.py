"""Streaming ensemble statistics with a deterministic merge tree.

The accumulator keeps a binary-counter stack of power-of-two partial
summaries combined by the exact pairwise (Chan) rule.  Because the
reduction tree is a function of sample order alone, sequential updating
and any power-of-two-aligned sharding produce bit-identical results;
the Monte Carlo runner relies on this for worker-count-independent
output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EnsembleAccumulator",
    "BlochCurve",
    "hs_distance",
    "fluctuation_curve",
]


def _combine(na, mean_a, m2re_a, m2im_a, nb, mean_b, m2re_b, m2im_b):
    """Exact pairwise combination of two (count, mean, m2) summaries.

    One fixed expression ordering, shared by the scalar and vectorized
    reduction paths so both produce identical bits.
    """
    n = na + nb
    w = nb / n
    f = na * w
    delta = mean_b - mean_a
    dre = delta.real
    dim = delta.imag
    mean = mean_a + delta * w
    m2re = m2re_a + m2re_b + dre * dre * f
    m2im = m2im_a + m2im_b + dim * dim * f
    return n, mean, m2re, m2im


@dataclass
class _Node:
    level: int
    count: int
    mean: np.ndarray
    m2re: np.ndarray
    m2im: np.ndarray


@dataclass
class EnsembleAccumulator:
    """Single-pass complex mean/variance over scalar or array samples.

    update() pushes one sample; merge() appends another accumulator's
    samples after this one's; finalize() returns (mean, stderr) with
    stderr = sqrt(m2 / (count*(count-1))) per real/imag component,
    reported as the elementwise max of the two components.
    """

    _stack: list[_Node] = field(default_factory=list)

    @property
    def count(self) -> int:
        return sum(node.count for node in self._stack)

    @property
    def shape(self) -> tuple[int, ...] | None:
        return self._stack[0].mean.shape if self._stack else None

    def update(self, sample) -> "EnsembleAccumulator":
        mean = np.asarray(sample, dtype=np.complex128)
        if self._stack and mean.shape != self._stack[0].mean.shape:
            raise ValueError(f"sample shape {mean.shape} != accumulator shape {self._stack[0].mean.shape}")
        zeros = np.zeros(mean.shape, dtype=np.float64)
        self._push(_Node(0, 1, mean.copy(), zeros, zeros.copy()))
        return self

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        """Append `other`'s samples after this accumulator's own.

        Bit-identical to sequentially updating with the concatenated
        sample sequence whenever shard sizes are powers of two aligned
        to the sample order (the runner's fixed-block contract).
        """
        if other._stack and self._stack and other._stack[0].mean.shape != self._stack[0].mean.shape:
            raise ValueError("cannot merge accumulators of different sample shapes")
        for node in other._stack:
            self._push(_Node(node.level, node.count, node.mean.copy(), node.m2re.copy(), node.m2im.copy()))
        return self

    def _push(self, node: _Node) -> None:
        stack = self._stack
        stack.append(node)
        while len(stack) >= 2 and stack[-2].level <= stack[-1].level:
            b = stack.pop()
            a = stack.pop()
            n, mean, m2re, m2im = _combine(
                a.count, a.mean, a.m2re, a.m2im, b.count, b.mean, b.m2re, b.m2im
            )
            stack.append(_Node(max(a.level, b.level) + 1, n, mean, m2re, m2im))

    @classmethod
    def from_samples(cls, samples) -> "EnsembleAccumulator":
        """Reduce samples (leading axis = sample index) in one pass.

        Produces exactly the binary-counter state sequential update()
        calls would build, but combines whole levels at a time, which is
        what makes million-trajectory accumulation affordable.
        """
        arr = np.ascontiguousarray(np.asarray(samples, dtype=np.complex128))
        acc = cls()
        n = arr.shape[0]
        start = 0
        for bit in reversed(range(max(n.bit_length(), 1))):
            size = 1 << bit
            if n & size:
                acc._stack.append(cls._reduce_chunk(arr[start : start + size], bit))
                start += size
        return acc

    @staticmethod
    def _reduce_chunk(chunk: np.ndarray, level: int) -> _Node:
        count = 1
        mean = chunk
        m2re = np.zeros(chunk.shape, dtype=np.float64)
        m2im = np.zeros(chunk.shape, dtype=np.float64)
        for _ in range(level):
            na = count
            count, mean, m2re, m2im = _combine(
                na, mean[0::2], m2re[0::2], m2im[0::2], na, mean[1::2], m2re[1::2], m2im[1::2]
            )
        return _Node(level, count, np.asarray(mean[0]).copy(), np.asarray(m2re[0]).copy(), np.asarray(m2im[0]).copy())

    def finalize(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.count
        if n < 2:
            raise ValueError("finalize requires at least 2 samples")
        node = self._stack[-1]
        count, mean, m2re, m2im = node.count, node.mean, node.m2re, node.m2im
        for earlier in self._stack[-2::-1]:
            count, mean, m2re, m2im = _combine(
                earlier.count, earlier.mean, earlier.m2re, earlier.m2im, count, mean, m2re, m2im
            )
        denom = count * (count - 1)
        se = np.maximum(np.sqrt(m2re / denom), np.sqrt(m2im / denom))
        return mean.copy(), se

    def mean_no_error(self) -> np.ndarray:
        """Mean alone, valid from one sample up."""
        if not self._stack:
            raise ValueError("empty accumulator")
        node = self._stack[-1]
        count, mean = node.count, node.mean
        m2re, m2im = node.m2re, node.m2im
        for earlier in self._stack[-2::-1]:
            count, mean, m2re, m2im = _combine(
                earlier.count, earlier.mean, earlier.m2re, earlier.m2im, count, mean, m2re, m2im
            )
        return mean.copy()


@dataclass(frozen=True)
class BlochCurve:
    """A time grid with estimates, standard errors, and exact reference.

    `exact` is None for runs without an analytic or oracle reference.
    Stochastic curves carry the per-point standard error; exact curves
    carry zeros.
    """

    times: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    exact: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        est = np.asarray(self.estimate, dtype=np.complex128)
        se = np.asarray(self.stderr, dtype=np.float64)
        if not (t.shape == est.shape == se.shape):
            raise ValueError("times, estimate, stderr must share one shape")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly ascending")
        if np.any(se < 0):
            raise ValueError("stderr entries must be nonnegative")
        if self.exact is not None:
            ex = np.asarray(self.exact, dtype=np.complex128)
            if ex.shape != t.shape:
                raise ValueError("exact reference must match the grid")
            object.__setattr__(self, "exact", ex)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "estimate", est)
        object.__setattr__(self, "stderr", se)


def hs_distance(r, rho) -> float:
    """Hilbert-Schmidt distance sqrt(tr[(r-rho)^H (r-rho)])."""
    a = np.asarray(r, dtype=np.complex128)
    b = np.asarray(rho, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def fluctuation_curve(ensembles, exact_refs=None, to_operator=None) -> np.ndarray:
    """Mean squared Hilbert-Schmidt distance to the exact state, per time.

    Parameters
    ----------
    ensembles : sequence
        One entry per grid time.  With `to_operator` given, each entry is
        an iterable of snapshots and the distance of to_operator(snapshot)
        to the matching exact_refs matrix is taken.  Without it, each
        entry is already a 1-d array of squared distances (large-bath
        callers compute those in closed form; exact_refs is ignored).
    exact_refs : sequence of matrices, optional
    to_operator : callable, optional

    Returns
    -------
    numpy.ndarray of per-time means of ||R(t) - rho(t)||^2.
    """
    out = np.empty(len(ensembles), dtype=np.float64)
    for i, entry in enumerate(ensembles):
        if to_operator is None:
            d2 = np.asarray(entry, dtype=np.float64)
        else:
            ref = exact_refs[i]
            d2 = np.array([hs_distance(to_operator(s), ref) ** 2 for s in entry])
        if d2.size == 0:
            raise ValueError("empty ensemble at grid index %d" % i)
        out[i] = math.fsum(d2) / d2.size
    return out
