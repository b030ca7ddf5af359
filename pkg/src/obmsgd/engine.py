"""Truncated stochastic gradient descent over pluggable oracles and streams.

The update is plain SGD with a polynomially decaying step size, wrapped in a
stability safeguard: whenever a candidate iterate jumps farther than a
shrinking threshold in one step, or leaves the current confinement ball, the
iterate is reset to the starting point, the ball grows geometrically, and the
data stream is restarted from its initial law. A run that never triggers the
safeguard is exactly vanilla averaged SGD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .batchmeans import CovarianceEstimate
from .errors import NumericalError

__all__ = [
    "StepSchedule",
    "TruncationSchedule",
    "IterateState",
    "Snapshot",
    "RunTrace",
    "sgd_step",
    "run",
]


@dataclass(frozen=True)
class StepSchedule:
    """Step size eta0 * k**(-a), strictly decreasing for a in (1/2, 1)."""

    eta0: float = 2.0
    a: float = 0.5005

    def __post_init__(self):
        if not (self.eta0 > 0) or not math.isfinite(self.eta0):
            raise ValueError(f"eta0 must be positive and finite, got {self.eta0}")
        if not (0.5 < self.a < 1.0):
            raise ValueError(f"step exponent must lie in (1/2, 1), got {self.a}")

    def eta(self, k: int) -> float:
        return self.eta0 * k ** (-self.a)


@dataclass(frozen=True)
class TruncationSchedule:
    """Per-step jump thresholds d0 * k**(-b) and confinement radii r0 * growth**q.

    The threshold sequence shrinks (b in (0, 3/8)); the radius of the q-th
    confinement ball grows geometrically so each ball sits strictly inside
    the next. `disabled()` gives infinite thresholds and radii, turning the
    safeguard off entirely.
    """

    d0: float = 10.0
    b: float = 0.3
    r0: float = 10.0
    growth: float = 2.0

    def __post_init__(self):
        if not (self.d0 > 0):
            raise ValueError(f"threshold scale d0 must be positive, got {self.d0}")
        if not (0.0 < self.b < 0.375):
            raise ValueError(f"threshold exponent must lie in (0, 3/8), got {self.b}")
        if not (self.r0 > 0):
            raise ValueError(f"base radius r0 must be positive, got {self.r0}")
        if not (self.growth > 1):
            raise ValueError(f"radius growth factor must exceed 1, got {self.growth}")

    def threshold(self, k: int) -> float:
        return self.d0 * k ** (-self.b)

    def radius(self, truncations: int) -> float:
        try:
            return self.r0 * self.growth**truncations
        except OverflowError:
            return math.inf

    @classmethod
    def disabled(cls) -> "TruncationSchedule":
        return cls(d0=math.inf, r0=math.inf)


@dataclass
class IterateState:
    """Current iterate, truncation count, iteration index, and reset target."""

    theta: np.ndarray
    kappa: int = 0
    k: int = 0
    theta_init: np.ndarray | None = None
    truncated: bool = False

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta_init is None:
            self.theta_init = self.theta.copy()


@dataclass
class Snapshot:
    """State recorded at a checkpoint: running average, covariance, bookkeeping.

    `n_eff` counts the iterates actually behind the average and the estimate,
    which is smaller than `k` after a truncation restart or with burn-in.
    """

    k: int
    theta_bar: np.ndarray | None
    cov: CovarianceEstimate | None
    n_eff: int
    n_truncations: int


@dataclass
class RunTrace:
    theta_bar: np.ndarray
    n_truncations: int
    snapshots: list[Snapshot] = field(default_factory=list)
    n: int = 0
    iterates: np.ndarray | None = None
    reset_iterations: list[int] = field(default_factory=list)


def sgd_step(
    state: IterateState,
    grad: np.ndarray,
    steps: StepSchedule,
    trunc: TruncationSchedule,
) -> IterateState:
    """Advance one iteration: candidate = theta - eta_{k+1} * grad, then accept
    or reset per the truncation rule.

    On a reset the returned state carries theta_init, an incremented
    truncation count, and `truncated=True`; the caller must also restart the
    data stream from its initial law. Norm comparisons use squared norms.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.theta.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match iterate shape {state.theta.shape}")
    if not np.isfinite(grad).all():
        raise NumericalError(f"non-finite gradient at iteration {state.k + 1}")
    k1 = state.k + 1
    candidate = state.theta - steps.eta(k1) * grad
    delta = candidate - state.theta
    dk = trunc.threshold(k1)
    radius = trunc.radius(state.kappa)
    if (delta * delta).sum() >= dk * dk or (candidate * candidate).sum() > radius * radius:
        return IterateState(
            theta=state.theta_init.copy(),
            kappa=state.kappa + 1,
            k=k1,
            theta_init=state.theta_init,
            truncated=True,
        )
    return IterateState(
        theta=candidate, kappa=state.kappa, k=k1, theta_init=state.theta_init, truncated=False
    )


def run(
    oracle,
    stream,
    steps: StepSchedule,
    trunc: TruncationSchedule,
    n: int,
    checkpoints=(),
    estimator=None,
    *,
    theta0: np.ndarray | None = None,
    burn_in: int = 0,
    record_iterates: bool = False,
) -> RunTrace:
    """Run the full loop for n iterations.

    Per iteration: draw a sample from the stream conditioned on the current
    iterate, evaluate the oracle gradient, apply `sgd_step`, and feed the new
    iterate to the running average and the covariance estimator. On a
    truncation reset the stream restarts from its initial law and the average
    and estimator restart empty (pre-reset iterates are discarded, and the
    reset iterate is the first of the new window). Snapshots are recorded
    after the listed iterations.

    `burn_in` iterates are excluded from the average and estimator; default 0
    so averaging starts at the first iterate.
    """
    d = stream.d
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (0 <= burn_in < n):
        raise ValueError(f"burn_in must lie in [0, n), got {burn_in}")
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    if theta0.shape != (d,):
        raise ValueError(f"theta0 has shape {theta0.shape}, expected ({d},)")
    if (theta0 * theta0).sum() > trunc.radius(0) ** 2:
        raise ValueError("initial point lies outside the base confinement ball")
    cps = sorted(int(c) for c in checkpoints)
    if any(c < 1 or c > n for c in cps):
        raise ValueError("checkpoints must lie in [1, n]")
    cpset = set(cps)

    state = IterateState(theta=theta0.copy(), theta_init=theta0)
    total = np.zeros(d)
    fed = 0
    truncs = 0
    snaps: list[Snapshot] = []
    resets: list[int] = []
    iterates = np.empty((n, d)) if record_iterates else None

    for k in range(1, n + 1):
        sample = stream.sample(state.theta)
        grad = oracle.grad(state.theta, sample)
        state = sgd_step(state, grad, steps, trunc)
        if state.truncated:
            truncs += 1
            resets.append(k)
            stream.reset()
            total[:] = 0.0
            fed = 0
            if estimator is not None:
                estimator.reset()
        if record_iterates:
            iterates[k - 1] = state.theta
        if k > burn_in:
            total += state.theta
            fed += 1
            if estimator is not None:
                try:
                    estimator.update(state.theta)
                except Exception as exc:
                    raise RuntimeError(f"estimator failed at iteration {k}") from exc
        if k in cpset:
            theta_bar = total / fed if fed else None
            cov = estimator.finalize() if (estimator is not None and estimator.n) else None
            snaps.append(Snapshot(k=k, theta_bar=theta_bar, cov=cov, n_eff=fed, n_truncations=truncs))

    final_bar = total / fed if fed else theta0.copy()
    return RunTrace(
        theta_bar=final_bar,
        n_truncations=truncs,
        snapshots=snaps,
        n=n,
        iterates=iterates,
        reset_iterations=resets,
    )
