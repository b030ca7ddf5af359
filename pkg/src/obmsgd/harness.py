"""Experiment engine: replicated runs, Monte-Carlo ground truth, metric
computation, slope fits, and CSV/JSON emission.

Everything downstream of a config and a master seed is deterministic:
replication seeds derive from the master seed by seed-splitting, aggregation
reduces in replication order, and files are written with fixed formatting, so
two runs of the same config produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .batchmeans import BatchSchedule, ObmAccumulator
from .engine import StepSchedule, TruncationSchedule, run
from .errors import ConfigError, NumericalError
from .fastpath import run_replications
from .inference import ci, mis_sample
from .objectives import make_objective
from .streams import load_csv, make_stream

__all__ = [
    "CONVENTIONS",
    "ExperimentConfig",
    "GroundTruth",
    "MetricsRow",
    "METRICS_COLUMNS",
    "config_hash",
    "estimate_ground_truth",
    "analytic_ground_truth",
    "run_experiment",
    "fit_slope",
    "fit_loglog",
    "spectral_norm",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_raw_csv",
]

# Modeling conventions that are fixed in code but affect reproducibility of
# numbers; recorded with every config so artifacts are self-describing.
CONVENTIONS = {
    "loss_scale": "half_squared_error",
    "chain_iterate_noise": "scalar",
    "pre_schedule_blocks": "single_block_from_1",
    "truncation_reset_draw": "fresh_initial_law",
    "truncation_sets": "geometric_radius",
}

METRICS_COLUMNS = (
    "checkpoint",
    "err_spectral",
    "err_frobenius",
    "coverage",
    "ci_width",
    "mis",
    "mean_truncations",
)

_FAST_KINDS = ("iid", "ar1", "state_dep")


@dataclass
class ExperimentConfig:
    """Flat description of one experiment; also the CLI/JSON surface.

    `theta_r` and `v` accept a scalar (broadcast over d), an explicit list,
    or None for the all-ones default. `beta=None` resolves to 2 / (1 - a) and
    `checkpoints=None` to the geometric grid ceil(n * 2**-j).
    """

    # model
    objective: str = "linear_sq"
    reg: float = 0.0
    stream: str = "state_dep"
    rho: float = 0.5
    eps: float = 0.5
    sigma: float = 1.0
    theta_r: object = None
    # agents-stream settings
    lam: float = 0.01
    alpha: float | None = None  # None -> 0.5 * lam
    n1: int = 50
    csv_path: str | None = None
    label_column: str | None = None
    modifiable_columns: list | None = None
    n_agents: int | None = None
    # run geometry
    d: int = 2
    n_iters: int = 50_000
    n_reps: int = 200
    n_truth_reps: int = 500
    checkpoints: list | None = None
    seed: int = 0
    burn_in: int = 0
    # schedules
    eta0: float = 2.0
    a: float = 0.5005
    d0: float = 10.0
    b: float = 0.3
    r0: float = 10.0
    growth: float = 2.0
    c: float = 2.0
    beta: float | None = None
    # inference
    v: object = None
    level: float = 0.95

    def __post_init__(self):
        self.validate()

    # -- resolved views -------------------------------------------------
    @property
    def beta_resolved(self) -> float:
        return 2.0 / (1.0 - self.a) if self.beta is None else float(self.beta)

    @property
    def alpha_resolved(self) -> float:
        return 0.5 * self.lam if self.alpha is None else float(self.alpha)

    def _vector(self, value, name: str) -> np.ndarray:
        if value is None:
            return np.ones(self.d)
        if np.isscalar(value):
            return np.full(self.d, float(value))
        arr = np.asarray(value, dtype=float)
        if arr.shape != (self.d,):
            raise ConfigError(f"{name} must have length d={self.d}, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ConfigError(f"{name} must be finite")
        return arr

    @property
    def theta_r_resolved(self) -> np.ndarray:
        return self._vector(self.theta_r, "theta_r")

    @property
    def v_resolved(self) -> np.ndarray:
        return self._vector(self.v, "v")

    @property
    def checkpoints_resolved(self) -> list[int]:
        if self.checkpoints is not None:
            return [int(c) for c in self.checkpoints]
        grid = sorted({max(1, math.ceil(self.n_iters * 2.0**-j)) for j in range(7)})
        return [c for c in grid if c > self.burn_in]

    def validate(self) -> None:
        if self.objective not in ("linear_sq", "logistic_l2"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.stream not in (*_FAST_KINDS, "agents"):
            raise ConfigError(f"unknown stream kind {self.stream!r}")
        if self.objective == "linear_sq" and self.reg != 0.0:
            raise ConfigError("linear_sq takes no regularization; set reg=0")
        if self.reg < 0:
            raise ConfigError("reg must be nonnegative")
        if self.d < 1:
            raise ConfigError("d must be at least 1")
        if self.n_iters < 1:
            raise ConfigError("n_iters must be at least 1")
        if self.n_reps < 1:
            raise ConfigError("n_reps must be at least 1")
        if not (0 <= self.burn_in < self.n_iters):
            raise ConfigError("burn_in must lie in [0, n_iters)")
        if not (0.0 < self.level < 1.0):
            raise ConfigError("level must lie in (0, 1)")
        if self.checkpoints is not None:
            cps = [int(x) for x in self.checkpoints]
            if not cps:
                raise ConfigError("checkpoints must be nonempty when given")
            if any(b <= a for a, b in zip(cps, cps[1:])):
                raise ConfigError("checkpoints must be strictly increasing")
            if cps[-1] > self.n_iters:
                raise ConfigError("last checkpoint exceeds n_iters")
            if cps[0] <= self.burn_in:
                raise ConfigError("checkpoints must lie beyond burn_in")
        if self.stream == "agents":
            if self.csv_path is None or self.label_column is None or not self.modifiable_columns:
                raise ConfigError(
                    "agents stream requires csv_path, label_column and modifiable_columns"
                )
        # Schedule constructors enforce their own parameter ranges.
        self.step_schedule()
        self.truncation_schedule()
        self.batch_schedule()

    # -- factories -------------------------------------------------------
    def step_schedule(self) -> StepSchedule:
        try:
            return StepSchedule(eta0=self.eta0, a=self.a)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def truncation_schedule(self) -> TruncationSchedule:
        try:
            return TruncationSchedule(d0=self.d0, b=self.b, r0=self.r0, growth=self.growth)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def batch_schedule(self) -> BatchSchedule:
        try:
            return BatchSchedule(self.c, self.beta_resolved)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def objective_fn(self):
        return make_objective(self.objective, self.reg)

    def label_mode(self) -> str:
        return "bernoulli" if self.objective == "logistic_l2" else "gaussian"

    def build_stream(self, seed):
        """Construct the data stream for one replication seed."""
        population = None
        if self.stream == "agents":
            population = load_csv(
                self.csv_path,
                self.label_column,
                self.modifiable_columns,
                n_agents=self.n_agents,
                seed=self.seed,
                alpha=self.alpha_resolved,
                lam=self.lam,
                n_update=self.n1,
            )
        return make_stream(
            self.stream,
            self.theta_r_resolved,
            rho=self.rho,
            eps=self.eps,
            sigma=self.sigma,
            labels=self.label_mode(),
            seed=seed,
            population=population,
        )

    # -- serialization ----------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["conventions"] = dict(CONVENTIONS)
        return out


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the fields that determine the ground truth.

    Projection, level and replication count for the experiment phase do not
    enter; anything that changes the law of a run or the truth estimate does.
    """
    payload = {
        "objective": cfg.objective,
        "reg": cfg.reg,
        "stream": cfg.stream,
        "rho": cfg.rho,
        "eps": cfg.eps,
        "sigma": cfg.sigma,
        "theta_r": list(cfg.theta_r_resolved),
        "agents": [cfg.lam, cfg.alpha_resolved, cfg.n1, cfg.csv_path, cfg.n_agents],
        "d": cfg.d,
        "n_iters": cfg.n_iters,
        "n_truth_reps": cfg.n_truth_reps,
        "seed": cfg.seed,
        "burn_in": cfg.burn_in,
        "schedules": [cfg.eta0, cfg.a, cfg.d0, cfg.b, cfg.r0, cfg.growth, cfg.c, cfg.beta_resolved],
        "conventions": CONVENTIONS,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class GroundTruth:
    """Monte-Carlo target values the experiment metrics are measured against."""

    theta_star: np.ndarray
    sigma: np.ndarray
    reps: int
    config_hash: str
    rel_se: float | None = None  # bootstrap relative Frobenius SE, not serialized

    def save(self, path) -> None:
        """Write the spec'd JSON artifact with 17-significant-digit numbers."""
        theta = "[" + ", ".join(_fmt(x) for x in self.theta_star) + "]"
        rows = ", ".join("[" + ", ".join(_fmt(x) for x in row) + "]" for row in self.sigma)
        doc = (
            "{\n"
            f'  "theta_star": {theta},\n'
            f'  "sigma": [{rows}],\n'
            f'  "reps": {int(self.reps)},\n'
            f'  "config_hash": "{self.config_hash}"\n'
            "}\n"
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(doc)

    @classmethod
    def load(cls, path) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(
            theta_star=np.asarray(data["theta_star"], dtype=float),
            sigma=np.asarray(data["sigma"], dtype=float),
            reps=int(data["reps"]),
            config_hash=str(data["config_hash"]),
        )


def _replication_results(cfg: ExperimentConfig, rep_seeds, *, with_covariance: bool, checkpoints=None):
    """Dispatch replications to the lockstep runner or the sequential engine."""
    if checkpoints is None:
        checkpoints = cfg.checkpoints_resolved
    if cfg.stream in _FAST_KINDS:
        return run_replications(
            cfg.objective_fn(),
            stream_kind=cfg.stream,
            theta_r=cfg.theta_r_resolved,
            rho=cfg.rho,
            eps=cfg.eps,
            sigma=cfg.sigma,
            steps=cfg.step_schedule(),
            trunc=cfg.truncation_schedule(),
            batch=cfg.batch_schedule(),
            n=cfg.n_iters,
            checkpoints=checkpoints,
            rep_seeds=rep_seeds,
            burn_in=cfg.burn_in,
            with_covariance=with_covariance,
        )
    # Sequential fallback (agents stream).
    reps = len(rep_seeds)
    d = cfg.d
    ncp = len(checkpoints)
    out_bar = np.full((ncp, reps, d), np.nan)
    out_cov = np.full((ncp, reps, d, d), np.nan) if with_covariance else None
    out_eff = np.zeros((ncp, reps), dtype=np.int64)
    out_tr = np.zeros((ncp, reps), dtype=np.int64)
    objective = cfg.objective_fn()
    for r, ss in enumerate(rep_seeds):
        stream = cfg.build_stream(ss)
        if stream.d != d:
            raise ConfigError(f"stream dimension {stream.d} does not match config d={d}")
        estimator = ObmAccumulator(d, cfg.batch_schedule()) if with_covariance else None
        trace = run(
            objective,
            stream,
            cfg.step_schedule(),
            cfg.truncation_schedule(),
            cfg.n_iters,
            checkpoints,
            estimator,
            burn_in=cfg.burn_in,
        )
        for i, snap in enumerate(trace.snapshots):
            out_bar[i, r] = snap.theta_bar
            out_eff[i, r] = snap.n_eff
            out_tr[i, r] = snap.n_truncations
            if with_covariance and snap.cov is not None:
                out_cov[i, r] = snap.cov.matrix

    class _Results:
        pass

    res = _Results()
    res.checkpoints = np.asarray(checkpoints, dtype=np.int64)
    res.theta_bar, res.cov, res.n_eff, res.truncations = out_bar, out_cov, out_eff, out_tr
    return res


def _seed_branches(cfg: ExperimentConfig):
    truth_branch, exp_branch = np.random.SeedSequence(cfg.seed).spawn(2)
    return truth_branch, exp_branch


def estimate_ground_truth(cfg: ExperimentConfig, *, bootstrap: int = 200) -> GroundTruth:
    """Estimate the target parameter and limiting covariance by replication.

    theta_star is the mean of the final averaged iterate across replications;
    sigma is n_iters times their sample covariance. A bootstrap over
    replications supplies a relative Frobenius standard error for sigma,
    attached as `rel_se` (not serialized).
    """
    if cfg.n_truth_reps < 50:
        raise ConfigError(f"n_truth_reps must be at least 50, got {cfg.n_truth_reps}")
    truth_branch, _ = _seed_branches(cfg)
    rep_seeds = truth_branch.spawn(cfg.n_truth_reps)
    # Truth replications always run to the full horizon, independent of the
    # experiment's checkpoint grid, since sigma scales by n_iters.
    res = _replication_results(cfg, rep_seeds, with_covariance=False, checkpoints=[cfg.n_iters])
    bars = res.theta_bar[-1]  # (reps, d)
    bad = np.flatnonzero(~np.isfinite(bars).all(axis=1))
    if bad.size:
        raise NumericalError(
            f"non-finite averaged iterate in truth replications {bad.tolist()} "
            f"(master seed {cfg.seed})"
        )
    theta_star = bars.mean(axis=0)
    centered = bars - theta_star
    with np.errstate(over="ignore"):
        sigma = cfg.n_iters * (centered.T @ centered) / (cfg.n_truth_reps - 1)
    sigma = 0.5 * (sigma + sigma.T)
    if not np.isfinite(sigma).all():
        raise NumericalError(
            f"covariance of truth replications overflowed (master seed {cfg.seed})"
        )

    rel_se = None
    if bootstrap > 0:
        rng = np.random.default_rng(truth_branch.spawn(1)[0])
        norm = np.linalg.norm(sigma)
        draws = np.empty(bootstrap)
        with np.errstate(over="ignore", invalid="ignore"):
            for bi in range(bootstrap):
                idx = rng.integers(cfg.n_truth_reps, size=cfg.n_truth_reps)
                sub = bars[idx]
                subc = sub - sub.mean(axis=0)
                sb = cfg.n_iters * (subc.T @ subc) / (cfg.n_truth_reps - 1)
                draws[bi] = np.linalg.norm(sb - sigma)
            rel_se = float(draws.std() / norm) if norm > 0 else 0.0

    return GroundTruth(
        theta_star=theta_star,
        sigma=sigma,
        reps=cfg.n_truth_reps,
        config_hash=config_hash(cfg),
        rel_se=rel_se,
    )


def analytic_ground_truth(cfg: ExperimentConfig) -> GroundTruth:
    """Closed-form truth for the i.i.d. linear model, for tests.

    With features and label noise both at scale sigma and the half-squared
    loss, the averaged design matrix is sigma^2 I and the gradient noise
    covariance at the target is sigma^4 I, so the limiting covariance is the
    identity and the target equals the generating parameter.
    """
    if cfg.stream != "iid" or cfg.objective != "linear_sq":
        raise ConfigError("analytic ground truth exists only for the i.i.d. linear model")
    return GroundTruth(
        theta_star=cfg.theta_r_resolved.copy(),
        sigma=np.eye(cfg.d),
        reps=0,
        config_hash=config_hash(cfg),
    )


@dataclass
class MetricsRow:
    checkpoint: int
    err_spectral: float
    err_frobenius: float
    coverage: float
    ci_width: float
    mis: float
    mean_truncations: float


def run_experiment(cfg: ExperimentConfig, truth: GroundTruth | None = None):
    """Execute the replicated experiment and aggregate per-checkpoint metrics.

    Returns (metrics_rows, raw_rows): one MetricsRow per checkpoint averaged
    over replications, and per-replication raw dict rows for optional export.
    The truth is estimated first when not supplied.
    """
    if truth is None:
        truth = estimate_ground_truth(cfg)
    _, exp_branch = _seed_branches(cfg)
    rep_seeds = exp_branch.spawn(cfg.n_reps)
    res = _replication_results(cfg, rep_seeds, with_covariance=True)

    v = cfg.v_resolved
    theta_v = float((v * truth.theta_star).sum())
    alpha1 = 1.0 - cfg.level
    rows: list[MetricsRow] = []
    raw: list[dict] = []
    for i, k in enumerate(res.checkpoints):
        err_s = np.empty(cfg.n_reps)
        err_f = np.empty(cfg.n_reps)
        widths = np.empty(cfg.n_reps)
        covered = np.empty(cfg.n_reps)
        scores = np.empty(cfg.n_reps)
        for r in range(cfg.n_reps):
            if not np.isfinite(res.theta_bar[i, r]).all() or not np.isfinite(res.cov[i, r]).all():
                raise NumericalError(
                    f"non-finite state in replication {r} at checkpoint {int(k)} "
                    f"(master seed {cfg.seed})"
                )
            diff = res.cov[i, r] - truth.sigma
            err_s[r] = spectral_norm(diff)
            err_f[r] = float(np.linalg.norm(diff))
            interval = ci(res.theta_bar[i, r], res.cov[i, r], v, int(res.n_eff[i, r]), cfg.level)
            widths[r] = interval.width
            covered[r] = 1.0 if interval.contains(theta_v) else 0.0
            scores[r] = mis_sample(interval.lo, interval.hi, alpha1, [theta_v]).mis
            raw.append(
                {
                    "rep": r,
                    "checkpoint": int(k),
                    "center": float((v * res.theta_bar[i, r]).sum()),
                    "ci_lo": interval.lo,
                    "ci_hi": interval.hi,
                    "covered": int(covered[r]),
                    "err_spectral": err_s[r],
                    "err_frobenius": err_f[r],
                    "truncations": int(res.truncations[i, r]),
                }
            )
        row = MetricsRow(
            checkpoint=int(k),
            err_spectral=float(err_s.mean()),
            err_frobenius=float(err_f.mean()),
            coverage=float(covered.mean()),
            ci_width=float(widths.mean()),
            mis=float(scores.mean()),
            mean_truncations=float(res.truncations[i].mean()),
        )
        values = [row.err_spectral, row.err_frobenius, row.coverage, row.ci_width, row.mis]
        if not all(math.isfinite(x) for x in values):
            raise NumericalError(f"non-finite metrics at checkpoint {int(k)} (master seed {cfg.seed})")
        rows.append(row)
    return rows, raw


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.checkpoint,
                    _fmt(row.err_spectral),
                    _fmt(row.err_frobenius),
                    _fmt(row.coverage),
                    _fmt(row.ci_width),
                    _fmt(row.mis),
                    _fmt(row.mean_truncations),
                ]
            )


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_COLUMNS:
            raise ConfigError(f"{path}: expected metrics header {','.join(METRICS_COLUMNS)}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(
                MetricsRow(
                    checkpoint=int(rec[0]),
                    err_spectral=float(rec[1]),
                    err_frobenius=float(rec[2]),
                    coverage=float(rec[3]),
                    ci_width=float(rec[4]),
                    mis=float(rec[5]),
                    mean_truncations=float(rec[6]),
                )
            )
    return rows


def write_raw_csv(raw_rows, path) -> None:
    cols = (
        "rep",
        "checkpoint",
        "center",
        "ci_lo",
        "ci_hi",
        "covered",
        "err_spectral",
        "err_frobenius",
        "truncations",
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in raw_rows:
            writer.writerow(
                [
                    row["rep"],
                    row["checkpoint"],
                    _fmt(row["center"]),
                    _fmt(row["ci_lo"]),
                    _fmt(row["ci_hi"]),
                    row["covered"],
                    _fmt(row["err_spectral"]),
                    _fmt(row["err_frobenius"]),
                    row["truncations"],
                ]
            )


def fit_loglog(x, y) -> tuple[float, float, float]:
    """Least squares of log(y) on log(x): (slope, intercept, r_squared).

    Requires at least 4 points spanning at least a decade in x, all y
    positive. A constant y gives slope 0 with r^2 = 1 by convention.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise ValueError(f"need at least 4 points for a slope fit, got {x.size}")
    if x.min() <= 0 or x.max() / x.min() < 10.0:
        raise ValueError("x values must span at least one decade")
    if (y <= 0).any():
        raise ValueError("y values must be positive for a log fit")
    lx, ly = np.log(x), np.log(y)
    lx_c = lx - lx.mean()
    ly_c = ly - ly.mean()
    sxx = float((lx_c * lx_c).sum())
    sxy = float((lx_c * ly_c).sum())
    syy = float((ly_c * ly_c).sum())
    slope = sxy / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    r2 = 1.0 if syy == 0.0 else (sxy * sxy) / (sxx * syy)
    return slope, intercept, r2


def fit_slope(rows, column: str = "err_spectral") -> tuple[float, float, float]:
    """Log-log slope of a metrics column against the checkpoint index."""
    ks = [row.checkpoint for row in rows]
    ys = [getattr(row, column) for row in rows]
    return fit_loglog(ks, ys)


def spectral_norm(m: np.ndarray, *, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on the Gram matrix.

    Deterministic: the start vector comes from a fixed-seed generator, so the
    same matrix always yields the same value. Converges to relative 1e-9 or
    better for the small dense matrices used in the metrics.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("spectral_norm expects a 2-D matrix")
    scale = float(np.abs(m).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    b = m / scale
    g = b.T @ b
    v = np.random.default_rng(0x5EED).standard_normal(g.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        z = g @ v
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        v = z / nz
        new_lam = float(v @ g @ v)
        if abs(new_lam - lam) <= tol * max(new_lam, 1e-300):
            lam = new_lam
            break
        lam = new_lam
    return scale * math.sqrt(max(lam, 0.0))
