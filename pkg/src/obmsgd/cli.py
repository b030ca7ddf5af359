"""Command-line front end.

Subcommands:
  truth   estimate the target parameter and limiting covariance, write JSON
  run     run the replicated experiment, write the metrics CSV
  slope   fit a log-log slope to a column of an existing metrics CSV
  demo    one small run, printing the covariance estimate and an interval

Flags mirror `ExperimentConfig` fields; `--config FILE` loads a JSON document
with the same keys, and explicit flags override file values. Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigError, NumericalError
from .harness import (
    ExperimentConfig,
    GroundTruth,
    config_hash,
    estimate_ground_truth,
    fit_slope,
    read_metrics_csv,
    run_experiment,
    write_metrics_csv,
    write_raw_csv,
)
from .inference import ci

_LIST_FIELDS = {"theta_r", "v", "checkpoints", "modifiable_columns"}
_INT_FIELDS = {"d", "n_iters", "n_reps", "n_truth_reps", "seed", "burn_in", "n1", "n_agents"}
_FLOAT_FIELDS = {
    "reg", "rho", "eps", "sigma", "lam", "alpha",
    "eta0", "a", "d0", "b", "r0", "growth", "c", "beta", "level",
}
_STR_FIELDS = {"objective", "stream", "csv_path", "label_column"}


def _parse_list(name: str, text: str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if name == "checkpoints":
        return [int(t) for t in items]
    if name == "modifiable_columns":
        return items
    vals = [float(t) for t in items]
    return vals[0] if len(vals) == 1 else vals


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON config file; flags override its values")
    for name in sorted(_STR_FIELDS):
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)
    for name in sorted(_INT_FIELDS):
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int, default=None)
    for name in sorted(_FLOAT_FIELDS):
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None)
    for name in sorted(_LIST_FIELDS):
        parser.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            default=None,
            help="comma-separated values",
        )


def _build_config(args: argparse.Namespace, overrides: dict | None = None) -> ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: config document must be a JSON object")
        loaded.pop("conventions", None)  # informational echo, not a field
        data.update(loaded)
    for name in _STR_FIELDS | _INT_FIELDS | _FLOAT_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    for name in _LIST_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = _parse_list(name, value)
    if overrides:
        data.update(overrides)
    return ExperimentConfig.from_dict(data)


def _load_or_compute_truth(cfg: ExperimentConfig, path: str | None) -> GroundTruth:
    if path is not None:
        try:
            truth = GroundTruth.load(path)
        except FileNotFoundError:
            truth = None
        if truth is not None:
            if truth.config_hash == config_hash(cfg):
                return truth
            print(
                f"ground truth at {path} was built for a different config; recomputing",
                file=sys.stderr,
            )
    return estimate_ground_truth(cfg)


def _cmd_truth(args) -> int:
    cfg = _build_config(args)
    truth = estimate_ground_truth(cfg)
    truth.save(args.out)
    se = "" if truth.rel_se is None else f", bootstrap rel. Frobenius SE {truth.rel_se:.3g}"
    print(f"wrote {args.out} ({truth.reps} replications{se})")
    return 0


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    truth = _load_or_compute_truth(cfg, args.truth)
    if args.truth_out is not None:
        truth.save(args.truth_out)
    rows, raw = run_experiment(cfg, truth)
    write_metrics_csv(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} checkpoints x {cfg.n_reps} replications)")
    if args.raw is not None:
        write_raw_csv(raw, args.raw)
        print(f"wrote {args.raw}")
    return 0


def _cmd_slope(args) -> int:
    rows = read_metrics_csv(args.metrics)
    try:
        slope, intercept, r2 = fit_slope(rows, column=args.column)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(f"slope {slope:.6f}  intercept {intercept:.6f}  r2 {r2:.6f}")
    return 0


def _cmd_demo(args) -> int:
    overrides = {}
    if getattr(args, "n_iters", None) is None and args.config is None:
        overrides = {"n_iters": 20_000, "n_reps": 1, "n_truth_reps": 50}
    cfg = _build_config(args, overrides)
    exp_branch = np.random.SeedSequence(cfg.seed).spawn(2)[1]
    from .batchmeans import ObmAccumulator
    from .engine import run

    stream = cfg.build_stream(exp_branch.spawn(1)[0])
    estimator = ObmAccumulator(cfg.d, cfg.batch_schedule())
    trace = run(
        cfg.objective_fn(),
        stream,
        cfg.step_schedule(),
        cfg.truncation_schedule(),
        cfg.n_iters,
        checkpoints=[cfg.n_iters],
        estimator=estimator,
        burn_in=cfg.burn_in,
    )
    snap = trace.snapshots[-1]
    print(f"model: {cfg.objective} on {cfg.stream} stream, d={cfg.d}, n={cfg.n_iters}")
    print(f"averaged iterate: {np.array2string(snap.theta_bar, precision=6)}")
    print(f"truncation resets: {trace.n_truncations}")
    print("covariance estimate:")
    for row in snap.cov.matrix:
        print("  [" + ", ".join(format(x, ".17g") for x in row) + "]")
    interval = ci(snap.theta_bar, snap.cov, cfg.v_resolved, snap.n_eff, cfg.level)
    print(
        f"{cfg.level:.0%} interval for the v-projection: "
        f"[{interval.lo:.6f}, {interval.hi:.6f}] (width {interval.width:.6f})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obmsgd",
        description="Averaged SGD on Markovian streams with online batch-means covariance estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_truth = sub.add_parser("truth", help="estimate ground truth by replication")
    _add_config_flags(p_truth)
    p_truth.add_argument("--out", required=True, help="output JSON path")
    p_truth.set_defaults(func=_cmd_truth)

    p_run = sub.add_parser("run", help="run the replicated experiment")
    _add_config_flags(p_run)
    p_run.add_argument("--out", required=True, help="metrics CSV path")
    p_run.add_argument("--truth", default=None, help="ground-truth JSON to reuse (hash-checked)")
    p_run.add_argument("--truth-out", default=None, help="persist the ground truth used")
    p_run.add_argument("--raw", default=None, help="optional per-replication CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_slope = sub.add_parser("slope", help="log-log slope fit on a metrics CSV")
    p_slope.add_argument("--metrics", required=True)
    p_slope.add_argument("--column", default="err_spectral")
    p_slope.set_defaults(func=_cmd_slope)

    p_demo = sub.add_parser("demo", help="small single run; prints the estimate and interval")
    _add_config_flags(p_demo)
    p_demo.set_defaults(func=_cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
