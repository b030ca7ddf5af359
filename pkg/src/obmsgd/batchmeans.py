"""Online overlapping batch-means covariance estimation.

Averaged iterates of a stochastic approximation run satisfy a central limit
theorem, but the iterates are serially correlated, so the limiting covariance
cannot be read off per-iterate outer products. Overlapping batch means groups
the iterates into blocks whose boundaries are a strictly increasing integer
schedule, sums outer products of centered block sums, and normalizes by the
total block length. Everything here is streaming: one `update` per iterate,
O(d^2) work and memory, and `finalize` can be called at any time without
knowing the final iteration count in advance.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BatchSchedule",
    "CovarianceEstimate",
    "ObmAccumulator",
    "brute_force_covariance",
]


class BatchSchedule:
    """Strictly increasing block-start sequence ``floor(c * m**beta)``.

    Iterate k belongs to the block spanning ``[start(k), k]`` where start(k)
    is the largest schedule entry not exceeding k. Duplicate floors (possible
    for small c) are pushed forward by one so the sequence stays strictly
    increasing. When the first entry exceeds 1, the iterates before it form a
    single growing block that starts at 1; ``block`` itself rejects those k
    because the schedule proper does not define them.

    ``first_start_at_one`` replaces the first entry with 1, for the variant
    where the block sequence is pinned to begin at the first iterate.
    """

    def __init__(self, c: float, beta: float, *, first_start_at_one: bool = False):
        if not (c > 0) or not math.isfinite(c):
            raise ValueError(f"schedule scale c must be positive and finite, got {c}")
        if not (beta > 1) or not math.isfinite(beta):
            raise ValueError(f"schedule exponent beta must exceed 1, got {beta}")
        self.c = float(c)
        self.beta = float(beta)
        self.first_start_at_one = bool(first_start_at_one)
        first = 1 if first_start_at_one else max(1, int(math.floor(self.c)))
        self._starts = [first]
        self._next_m = 2

    def _extend_past(self, k: int) -> None:
        starts = self._starts
        while starts[-1] <= k:
            raw = int(math.floor(self.c * self._next_m**self.beta))
            starts.append(max(raw, starts[-1] + 1))
            self._next_m += 1

    @property
    def first_start(self) -> int:
        return self._starts[0]

    def block(self, k: int) -> tuple[int, int]:
        """Return (start, length) of the block containing iterate k."""
        k = int(k)
        if k < self._starts[0]:
            raise ValueError(
                f"no block defined for iterate {k}: schedule starts at {self._starts[0]}"
            )
        self._extend_past(k)
        t = self._starts[bisect_right(self._starts, k) - 1]
        return t, k - t + 1

    def next_start_after(self, k: int) -> int:
        """Smallest block start strictly greater than k."""
        self._extend_past(k)
        return self._starts[bisect_right(self._starts, int(k))]

    def starts_upto(self, n: int) -> np.ndarray:
        """All block starts <= n, with 1 prepended when the schedule begins later."""
        if n < 1:
            raise ValueError("n must be at least 1")
        self._extend_past(n)
        out = [s for s in self._starts if s <= n]
        if not out or out[0] > 1:
            out.insert(0, 1)
        return np.asarray(out, dtype=np.int64)


@dataclass
class CovarianceEstimate:
    """Symmetric covariance estimate together with the iterate count behind it."""

    matrix: np.ndarray
    n: int


def _kahan_add(acc: np.ndarray, comp: np.ndarray, x: np.ndarray) -> None:
    y = x - comp
    t = acc + y
    comp[...] = (t - acc) - y
    acc[...] = t


class ObmAccumulator:
    """Streaming sufficient statistics for the batch-means covariance.

    Feed iterates in order with `update`; `finalize` returns the covariance
    estimate implied by the overlapping block sums seen so far. The state is

    ==============  =====================================================
    ``block_sum``   sum of iterates in the current (open) block
    ``total``       sum of all iterates
    ``gram``        sum over i of the outer product of the i-th block sum
    ``weighted``    sum over i of block_length_i * block_sum_i
    ``len_sq_sum``  sum over i of block_length_i**2 (exact integer)
    ``len_sum``     sum over i of block_length_i (exact integer)
    ==============  =====================================================

    which determine the estimator without storing any iterate history.
    ``compensated=True`` switches `total` and `gram` to Kahan summation,
    worthwhile past ~1e6 iterates; plain summation is accurate below that.
    """

    def __init__(self, d: int, schedule: BatchSchedule, *, compensated: bool = False):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        self.d = int(d)
        self.schedule = schedule
        self.compensated = bool(compensated)
        self.reset()

    def reset(self) -> None:
        """Clear all state, as after a truncation restart."""
        d = self.d
        self.n = 0
        self.block_sum = np.zeros(d)
        self.total = np.zeros(d)
        self.gram = np.zeros((d, d))
        self.weighted = np.zeros(d)
        self.len_sq_sum = 0
        self.len_sum = 0
        self._block_len = 0
        self._next_start = 1
        if self.compensated:
            self._total_comp = np.zeros(d)
            self._gram_comp = np.zeros((d, d))

    def update(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.d,):
            raise ValueError(f"iterate has shape {theta.shape}, expected ({self.d},)")
        if not np.isfinite(theta).all():
            raise ValueError(f"non-finite iterate at update {self.n + 1}")
        k = self.n + 1
        if k == self._next_start:
            self.block_sum[:] = 0.0
            self._block_len = 0
            self._next_start = self.schedule.next_start_after(k)
        self.block_sum += theta
        self._block_len += 1
        l = self._block_len
        if self.compensated:
            _kahan_add(self.total, self._total_comp, theta)
            _kahan_add(self.gram, self._gram_comp, np.outer(self.block_sum, self.block_sum))
        else:
            self.total += theta
            self.gram += np.outer(self.block_sum, self.block_sum)
        self.weighted += l * self.block_sum
        self.len_sq_sum += l * l
        self.len_sum += l
        self.n = k

    def finalize(self) -> CovarianceEstimate:
        """Covariance estimate for the iterates fed so far.

        Pure: does not mutate the accumulator, so it can be called at every
        checkpoint of an ongoing run.
        """
        if self.n == 0:
            raise ValueError("cannot finalize an empty accumulator")
        mean = self.total / self.n
        m = (
            self.gram
            - np.outer(self.weighted, mean)
            - np.outer(mean, self.weighted)
            + self.len_sq_sum * np.outer(mean, mean)
        )
        m /= self.len_sum
        m = 0.5 * (m + m.T)
        return CovarianceEstimate(matrix=m, n=self.n)


def brute_force_covariance(iterates, schedule: BatchSchedule) -> CovarianceEstimate:
    """Direct evaluation of the batch-means formula on a stored sequence.

    Reference implementation for validating `ObmAccumulator`: block sums are
    taken from prefix sums and the centered outer products are formed
    explicitly. Cost and memory grow with n, so this is only for tests.
    """
    thetas = np.asarray(iterates, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    n = thetas.shape[0]
    if n == 0:
        raise ValueError("iterate list must be nonempty")
    starts = schedule.starts_upto(n)
    ks = np.arange(1, n + 1)
    t = starts[np.searchsorted(starts, ks, side="right") - 1]
    lengths = ks - t + 1
    prefix = np.vstack([np.zeros(thetas.shape[1]), np.cumsum(thetas, axis=0)])
    block_sums = prefix[ks] - prefix[t - 1]
    mean = thetas.sum(axis=0) / n
    centered = block_sums - lengths[:, None] * mean
    m = centered.T @ centered / lengths.sum()
    return CovarianceEstimate(matrix=m, n=n)
