"""Confidence intervals for linear functionals of the averaged iterates, and
interval-score (MIS) evaluation.

The normal quantile is implemented here directly (rational approximation plus
one Newton refinement) so the package needs no statistics dependency; its
accuracy contract is |cdf(quantile(p)) - p| <= 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

__all__ = [
    "normal_cdf",
    "normal_quantile",
    "ConfidenceInterval",
    "ci",
    "MisReport",
    "mis_sample",
    "coverage",
]


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation to the inverse normal CDF: three regimes
# (lower tail, center, upper tail), each a ratio of polynomials.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF for p in (0, 1).

    One Newton step on the CDF refines the rational approximation to full
    double precision at the levels used for interval construction.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        z = (
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        z = (
            (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        ) / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        z = -(
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return z - (normal_cdf(z) - p) / pdf


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    k: int

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        """Closed-interval membership: boundary values count as covered."""
        return self.lo <= x <= self.hi


def ci(theta_bar: np.ndarray, cov, v: np.ndarray, k: int, level: float = 0.95) -> ConfidenceInterval:
    """Two-sided interval for the projection v.theta based on k iterations.

    Center is v.theta_bar; the halfwidth scales the projected covariance by
    1/k and the normal quantile at (1 + level) / 2. `cov` may be a
    CovarianceEstimate or a plain matrix. Projected variances that are
    negative within rounding (1e-10 of the trace) clamp to zero; anything
    more negative signals a broken accumulator and raises.
    """
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if k < 1:
        raise ValueError(f"iteration count must be at least 1, got {k}")
    matrix = np.asarray(getattr(cov, "matrix", cov), dtype=float)
    theta_bar = np.asarray(theta_bar, dtype=float)
    v = np.asarray(v, dtype=float)
    if matrix.shape != (v.shape[0], v.shape[0]) or theta_bar.shape != v.shape:
        raise ValueError(
            f"shape mismatch: theta_bar {theta_bar.shape}, cov {matrix.shape}, v {v.shape}"
        )
    var = float(v @ matrix @ v)
    if var < 0.0:
        scale = max(float(np.trace(matrix)), 0.0)
        if var < -1e-10 * scale:
            raise NumericalError(f"projected variance {var} is negative beyond rounding")
        var = 0.0
    center = float((v * theta_bar).sum())
    half = normal_quantile(0.5 * (1.0 + level)) * math.sqrt(var / k)
    return ConfidenceInterval(lo=center - half, hi=center + half, level=level, k=int(k))


@dataclass(frozen=True)
class MisReport:
    mis: float
    alpha1: float
    n_eval: int


def mis_sample(lo: float, hi: float, alpha1: float, values) -> MisReport:
    """Mean interval score of [lo, hi] against evaluation samples.

    Per sample: width plus (2 / alpha1) times the distance by which the
    sample escapes the interval. Averaging the per-sample score over draws of
    the target statistic is also how the population score is evaluated here
    (by Monte Carlo); no separate closed form is provided.
    """
    if not (0.0 < alpha1 < 1.0):
        raise ValueError(f"alpha1 must lie in (0, 1), got {alpha1}")
    if lo > hi:
        raise ValueError(f"interval bounds are reversed: [{lo}, {hi}]")
    z = np.asarray(values, dtype=float).ravel()
    if z.size == 0:
        raise ValueError("need at least one evaluation sample")
    penalty = (2.0 / alpha1) * ((z - hi) * (z > hi) + (lo - z) * (z < lo))
    return MisReport(mis=float(((hi - lo) + penalty).mean()), alpha1=float(alpha1), n_eval=z.size)


def coverage(intervals, truth: float) -> float:
    """Fraction of closed intervals containing the truth."""
    intervals = list(intervals)
    if not intervals:
        raise ValueError("need at least one interval")
    return sum(1.0 for iv in intervals if iv.lo <= truth <= iv.hi) / len(intervals)
