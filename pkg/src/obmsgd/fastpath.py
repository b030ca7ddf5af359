"""Lockstep execution of many independent replications of the training loop.

Replicated experiments dominate the runtime of every study this package runs,
so instead of looping the sequential engine per replication, this module
advances all replications simultaneously with array operations. Each
replication still owns its own seed-derived noise streams and accumulator
state: per-step noise is pre-generated in chunks from one generator per
replication (chunked draws from `Generator.standard_normal` reproduce
per-step draws bit for bit), and truncation resets draw from a separate
dedicated generator so a rare reset never shifts the step-noise alignment.
A replication run here is therefore the exact run the sequential engine
produces from the same seed, which the test suite asserts bitwise.

Only the built-in models are supported (linear / logistic objectives over
iid / ar1 / state-dependent streams); agent streams go through the engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from .batchmeans import BatchSchedule
from .engine import StepSchedule, TruncationSchedule

__all__ = ["ReplicationResults", "run_replications"]

_FAST_KINDS = ("iid", "ar1", "state_dep")


@dataclass
class ReplicationResults:
    """Per-checkpoint, per-replication outputs of a lockstep run."""

    checkpoints: np.ndarray  # (n_checkpoints,)
    theta_bar: np.ndarray  # (n_checkpoints, reps, d)
    cov: np.ndarray | None  # (n_checkpoints, reps, d, d)
    n_eff: np.ndarray  # (n_checkpoints, reps)
    truncations: np.ndarray  # (n_checkpoints, reps)


def run_replications(
    objective,
    *,
    stream_kind: str,
    theta_r: np.ndarray,
    rho: float = 0.5,
    eps: float = 0.5,
    sigma: float = 1.0,
    steps: StepSchedule,
    trunc: TruncationSchedule,
    batch: BatchSchedule,
    n: int,
    checkpoints,
    rep_seeds,
    theta0: np.ndarray | None = None,
    burn_in: int = 0,
    with_covariance: bool = True,
) -> ReplicationResults:
    """Run `len(rep_seeds)` independent replications for n iterations each.

    `rep_seeds` is a sequence of `np.random.SeedSequence` children, one per
    replication, exactly as the sequential engine would receive them. Returns
    stacked per-checkpoint snapshots ordered by replication index.
    """
    if stream_kind not in _FAST_KINDS:
        raise ValueError(f"unsupported stream kind for lockstep execution: {stream_kind!r}")
    if stream_kind == "ar1":
        eps = 0.0
    chain = stream_kind != "iid"
    logistic = objective.kind == "logistic_l2"
    reg = float(getattr(objective, "reg", 0.0))

    theta_r = np.asarray(theta_r, dtype=float)
    d = theta_r.shape[0]
    reps = len(rep_seeds)
    cps = sorted(int(c) for c in checkpoints)
    if not cps or cps[0] < 1 or cps[-1] > n:
        raise ValueError("checkpoints must be nonempty and lie in [1, n]")
    if not (0 <= burn_in < cps[0]):
        raise ValueError("burn_in must be smaller than the first checkpoint")
    cp_index = {k: i for i, k in enumerate(cps)}

    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    if (theta0 * theta0).sum() > trunc.radius(0) ** 2:
        raise ValueError("initial point lies outside the base confinement ball")

    step_gens, reset_gens = [], []
    for ss in rep_seeds:
        a, b = ss.spawn(2)
        step_gens.append(np.random.default_rng(a))
        reset_gens.append(np.random.default_rng(b))

    # Stream and iterate state.
    theta = np.tile(theta0, (reps, 1))
    u = np.empty((reps, d))
    if chain:
        for r in range(reps):
            u[r] = sigma * reset_gens[r].standard_normal(d)
    kappa = np.zeros(reps, dtype=np.int64)
    n_trunc = np.zeros(reps, dtype=np.int64)
    drift = rho * eps * sigma

    # Accumulator state (average and batch-means share the fed-iterate window).
    total = np.zeros((reps, d))
    n_fed = np.zeros(reps, dtype=np.int64)
    if with_covariance:
        block_sum = np.zeros((reps, d))
        gram = np.zeros((reps, d, d))
        weighted = np.zeros((reps, d))
        len_sq = np.zeros(reps, dtype=np.int64)
        len_sum = np.zeros(reps, dtype=np.int64)
        block_len = np.zeros(reps, dtype=np.int64)
        cursor = np.zeros(reps, dtype=np.int64)
        starts = np.append(batch.starts_upto(n), np.int64(2**62))
        outer_buf = np.empty((reps, d, d))

    out_bar = np.full((len(cps), reps, d), np.nan)
    out_cov = np.full((len(cps), reps, d, d), np.nan) if with_covariance else None
    out_eff = np.zeros((len(cps), reps), dtype=np.int64)
    out_tr = np.zeros((len(cps), reps), dtype=np.int64)

    row = d + 2 if chain else d + 1
    chunk_cap = max(64, min(8192, int(8e6 / (reps * row)) or 64))
    noise = np.empty((reps, chunk_cap, row))

    k = 0
    # Overflow to inf is the intended semantics in the truncation test (an
    # overflowed radius can never be exceeded; an overflowed step always
    # truncates); non-finite iterates surface as errors at aggregation.
    with np.errstate(over="ignore", invalid="ignore"):
        while k < n:
            m = min(chunk_cap, n - k)
            for r in range(reps):
                noise[r, :m] = step_gens[r].standard_normal((m, row))
            for j in range(m):
                k += 1
                z = noise[:, j, :]
                # --- stream step
                if chain:
                    u_next = (
                        (1.0 - rho) * u
                        + (rho * sigma) * z[:, :d]
                        + drift * (z[:, d : d + 1] * theta)
                    )
                else:
                    u_next = sigma * z[:, :d]
                mean_r = (u_next * theta_r).sum(axis=1)
                if logistic:
                    y = np.where(ndtr(z[:, -1]) < expit(mean_r), 1.0, -1.0)
                    margin = (u_next * theta).sum(axis=1)
                    s = expit(-y * margin)
                    grad = (-y * s)[:, None] * u_next + reg * theta
                else:
                    y = mean_r + sigma * z[:, -1]
                    resid = y - (u_next * theta).sum(axis=1)
                    grad = (-resid)[:, None] * u_next
                # --- truncated SGD step
                cand = theta - steps.eta(k) * grad
                delta = cand - theta
                dk = trunc.threshold(k)
                radius = trunc.r0 * trunc.growth**kappa
                hit = ((delta * delta).sum(axis=1) >= dk * dk) | (
                    (cand * cand).sum(axis=1) > radius * radius
                )
                if chain:
                    u = u_next
                if hit.any():
                    idx = np.flatnonzero(hit)
                    cand[idx] = theta0
                    kappa[idx] += 1
                    n_trunc[idx] += 1
                    if chain:
                        for r in idx:
                            u[r] = sigma * reset_gens[r].standard_normal(d)
                    total[idx] = 0.0
                    n_fed[idx] = 0
                    if with_covariance:
                        block_sum[idx] = 0.0
                        gram[idx] = 0.0
                        weighted[idx] = 0.0
                        len_sq[idx] = 0
                        len_sum[idx] = 0
                        block_len[idx] = 0
                        cursor[idx] = 0
                theta = cand
                # --- feed average and estimator
                if k > burn_in:
                    n_fed += 1
                    total += theta
                    if with_covariance:
                        fresh = starts[cursor] == n_fed
                        if fresh.any():
                            block_sum[fresh] = 0.0
                            block_len[fresh] = 0
                            cursor[fresh] += 1
                        block_sum += theta
                        block_len += 1
                        np.multiply(block_sum[:, :, None], block_sum[:, None, :], out=outer_buf)
                        gram += outer_buf
                        weighted += block_len[:, None] * block_sum
                        len_sq += block_len * block_len
                        len_sum += block_len
                # --- checkpoint
                ci = cp_index.get(k)
                if ci is not None:
                    bar = total / n_fed[:, None]
                    out_bar[ci] = bar
                    out_eff[ci] = n_fed
                    out_tr[ci] = n_trunc
                    if with_covariance:
                        cov = (
                            gram
                            - weighted[:, :, None] * bar[:, None, :]
                            - bar[:, :, None] * weighted[:, None, :]
                            + len_sq[:, None, None] * (bar[:, :, None] * bar[:, None, :])
                        )
                        cov /= len_sum[:, None, None]
                        out_cov[ci] = 0.5 * (cov + cov.transpose(0, 2, 1))

    return ReplicationResults(
        checkpoints=np.asarray(cps, dtype=np.int64),
        theta_bar=out_bar,
        cov=out_cov,
        n_eff=out_eff,
        truncations=out_tr,
    )
