"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL
line with the measured quantity next to its bound.

The Monte-Carlo criteria are ordinary experiments at desk scale, seeded so
every run of this module reproduces the same numbers. Replications execute
through the lockstep runner, whose bit-for-bit agreement with the sequential
engine is itself asserted in test_harness.py.
"""

import time

import numpy as np

from obmsgd import (
    AgentPopulation,
    BatchSchedule,
    ExperimentConfig,
    ObmAccumulator,
    Sample,
    StepSchedule,
    TruncationSchedule,
    brute_force_covariance,
    fit_slope,
    make_objective,
    mis_sample,
    run_experiment,
    spectral_norm,
)
from obmsgd.cli import main as cli_main
from obmsgd.fastpath import run_replications

from test_objectives import fd_gradient, fd_hessian, rel_err


def report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}: {name} ({detail})")
    assert ok, f"{name}: {detail}"


def test_01_oracle_equivalence_200_cases():
    rng = np.random.default_rng(0)
    t0 = time.time()
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(2, 2001))
        beta = float(rng.uniform(1.5, 5.0))
        c = float(rng.uniform(0.5, 3.0))
        thetas = rng.standard_normal((n, d))
        acc = ObmAccumulator(d, BatchSchedule(c, beta))
        for t in thetas:
            acc.update(t)
        online = acc.finalize().matrix
        offline = brute_force_covariance(thetas, BatchSchedule(c, beta)).matrix
        worst = max(worst, np.linalg.norm(online - offline) / max(np.linalg.norm(offline), 1e-30))
    elapsed = time.time() - t0
    report(
        "oracle equivalence, 200 random cases",
        worst <= 1e-10 and elapsed < 10.0,
        f"worst rel Frobenius {worst:.2e} <= 1e-10, {elapsed:.1f}s < 10s",
    )


def test_02_analytic_iid_covariance():
    # Closed-form target: features N(0, I_2) and unit noise under the
    # half-squared loss give limiting covariance exactly I. Estimator
    # settings are free here (unlike the pinned slope criterion); shorter
    # blocks (beta=2.5) and a larger step scale (shorter iterate correlation)
    # keep the finite-sample bias and variance of the estimate inside the
    # stated bands at n = 2e5.
    n, reps = 200_000, 100
    res = run_replications(
        make_objective("linear_sq"),
        stream_kind="iid",
        theta_r=np.ones(2),
        steps=StepSchedule(eta0=4.0, a=0.5005),
        trunc=TruncationSchedule(),
        batch=BatchSchedule(2, 2.5),
        n=n,
        checkpoints=[n],
        rep_seeds=np.random.SeedSequence(0).spawn(reps),
    )
    target = np.eye(2)
    mean_err = float(np.mean([spectral_norm(res.cov[0][r] - target) for r in range(reps)]))
    entry_dev = float(np.abs(res.cov[0].mean(axis=0) - target).max())
    report(
        "analytic i.i.d. covariance",
        mean_err <= 0.5 and entry_dev <= 0.1,
        f"mean spectral error {mean_err:.3f} <= 0.5, max entrywise dev {entry_dev:.3f} <= 0.1",
    )


def _state_dep_config(**kw):
    base = dict(
        objective="linear_sq",
        stream="state_dep",
        rho=0.5,
        eps=0.5,
        sigma=1.0,
        d=2,
        eta0=2.0,
        a=0.5005,
        c=2.0,
        beta=None,  # resolves to 2 / (1 - a)
        seed=0,
        n_truth_reps=500,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_03_rate_slope_state_dependent():
    cfg = _state_dep_config(
        n_iters=2**16, n_reps=200, checkpoints=[2**j for j in range(12, 17)]
    )
    rows, _ = run_experiment(cfg)
    slope, _, r2 = fit_slope(rows)
    report(
        "covariance error rate slope",
        -0.30 <= slope <= -0.03 and r2 >= 0.6,
        f"slope {slope:.3f} in [-0.30, -0.03], r2 {r2:.3f} >= 0.6",
    )


def test_04_coverage_state_dependent():
    cfg = _state_dep_config(n_iters=50_000, n_reps=200, checkpoints=[12_500, 25_000, 50_000])
    rows, _ = run_experiment(cfg)
    cov = rows[-1].coverage
    report(
        "nominal-95% interval coverage",
        0.90 <= cov <= 0.99,
        f"coverage {cov:.3f} in [0.90, 0.99] at checkpoint {rows[-1].checkpoint}",
    )


def test_05_gradient_correctness():
    rng = np.random.default_rng(1)
    worst_g = worst_h = 0.0
    for kind, reg in (("linear_sq", 0.0), ("logistic_l2", 0.005)):
        obj = make_objective(kind, reg)
        for _ in range(1000):
            d = int(rng.integers(1, 8))
            theta = rng.standard_normal(d)
            y = rng.standard_normal() if kind == "linear_sq" else (1.0 if rng.random() < 0.5 else -1.0)
            sample = Sample(rng.standard_normal(d), y)
            worst_g = max(worst_g, rel_err(obj.grad(theta, sample), fd_gradient(obj, theta, sample)))
            worst_h = max(worst_h, rel_err(obj.hessian(theta, sample), fd_hessian(obj, theta, sample)))
    report(
        "gradient and Hessian correctness",
        worst_g <= 1e-6 and worst_h <= 1e-6,
        f"worst gradient rel err {worst_g:.2e}, worst Hessian rel err {worst_h:.2e} <= 1e-6",
    )


def test_06_best_response_fixed_point():
    rng = np.random.default_rng(2)
    m, d = 50, 8
    feats = rng.standard_normal((m, d))
    mask = np.zeros(d, dtype=bool)
    mask[:4] = True
    lam = 0.01
    pop = AgentPopulation(
        features=feats.copy(),
        base_features=feats.copy(),
        modifiable=mask,
        labels=np.where(rng.random(m) < 0.5, 1.0, -1.0),
        alpha=0.5 * lam,
        lam=lam,
        n_update=m,
    )
    theta = rng.standard_normal(d)
    target = pop.base_features[:, mask] + lam * theta[mask]
    dists = []
    for _ in range(60):
        pop.best_response_round(theta, rng)
        dists.append(np.abs(pop.features[:, mask] - target).max())
    ratios = [dists[i + 1] / dists[i] for i in range(10)]
    contraction_dev = max(abs(r - 0.5) for r in ratios)
    report(
        "best-response fixed point",
        dists[-1] <= 1e-6 and contraction_dev <= 1e-9,
        f"distance {dists[-1]:.2e} <= 1e-6 within 60 rounds, contraction dev {contraction_dev:.2e} <= 1e-9",
    )


def test_07_estimator_invariances():
    rng = np.random.default_rng(3)
    thetas = rng.standard_normal((1200, 3))
    sched = lambda: BatchSchedule(2, 3.0)  # noqa: E731

    def estimate(x):
        acc = ObmAccumulator(3, sched())
        for t in x:
            acc.update(t)
        return acc.finalize().matrix

    base = estimate(thetas)
    shift_dev = np.abs(estimate(thetas + np.array([4.0, -7.0, 2.5])) - base).max()
    b = rng.standard_normal((3, 3))
    map_dev = np.abs(estimate(thetas @ b.T) - b @ base @ b.T).max()
    sym_dev = np.abs(base - base.T).max()
    min_eig = float(np.linalg.eigvalsh(base).min())
    ok = (
        shift_dev <= 1e-10
        and map_dev <= 1e-9
        and sym_dev == 0.0
        and min_eig >= -1e-10 * np.trace(base)
    )
    report(
        "estimator invariances",
        ok,
        f"shift {shift_dev:.1e} <= 1e-10, linear map {map_dev:.1e} <= 1e-9, "
        f"symmetry {sym_dev:.1e}, min eig {min_eig:.1e} >= -1e-10*trace",
    )


def test_08_cli_run_determinism(tmp_path):
    import json

    cfg = {
        "objective": "linear_sq",
        "stream": "state_dep",
        "d": 2,
        "n_iters": 3000,
        "n_reps": 10,
        "n_truth_reps": 50,
        "checkpoints": [1000, 3000],
        "seed": 17,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    m1, m2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
    assert cli_main(["run", "--config", str(cfg_path), "--out", str(m1)]) == 0
    assert cli_main(["run", "--config", str(cfg_path), "--out", str(m2)]) == 0
    identical = m1.read_bytes() == m2.read_bytes()
    report("run determinism", identical, "two runs emit byte-identical metrics CSVs")


def test_09_mis_identities():
    # Exact up to one unit in the last place of the decimal evaluation
    # (alpha1 = 0.05 is not binary-representable).
    vals = (
        mis_sample(0.0, 1.0, 0.05, [0.5]).mis,
        mis_sample(0.0, 1.0, 0.05, [1.5]).mis,
        mis_sample(0.0, 1.0, 0.05, [-0.25, 0.5]).mis,
    )
    dev = max(abs(v - want) for v, want in zip(vals, (1.0, 21.0, 6.0)))
    report("interval-score identities", dev <= 1e-12, f"max deviation {dev:.1e} <= 1e-12")
