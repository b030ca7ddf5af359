"""Averaged SGD on Markovian data streams with fully online covariance
estimation via overlapping batch means, confidence intervals for linear
functionals of the target, and a replicated experiment harness."""

from .batchmeans import BatchSchedule, CovarianceEstimate, ObmAccumulator, brute_force_covariance
from .engine import (
    IterateState,
    RunTrace,
    Snapshot,
    StepSchedule,
    TruncationSchedule,
    run,
    sgd_step,
)
from .errors import ConfigError, NumericalError
from .harness import (
    ExperimentConfig,
    GroundTruth,
    MetricsRow,
    analytic_ground_truth,
    config_hash,
    estimate_ground_truth,
    fit_loglog,
    fit_slope,
    run_experiment,
    spectral_norm,
    write_metrics_csv,
)
from .inference import ConfidenceInterval, MisReport, ci, coverage, mis_sample, normal_cdf, normal_quantile
from .objectives import LinearSquaredLoss, LogisticL2, Sample, make_objective
from .streams import (
    AgentPopulation,
    AgentStream,
    IidStream,
    MarkovChainStream,
    ar1_stream,
    load_csv,
    make_stream,
)

__version__ = "0.1.0"

__all__ = [
    "AgentPopulation",
    "AgentStream",
    "BatchSchedule",
    "ConfidenceInterval",
    "ConfigError",
    "CovarianceEstimate",
    "ExperimentConfig",
    "GroundTruth",
    "IidStream",
    "IterateState",
    "LinearSquaredLoss",
    "LogisticL2",
    "MarkovChainStream",
    "MetricsRow",
    "MisReport",
    "NumericalError",
    "ObmAccumulator",
    "RunTrace",
    "Sample",
    "Snapshot",
    "StepSchedule",
    "TruncationSchedule",
    "analytic_ground_truth",
    "ar1_stream",
    "brute_force_covariance",
    "ci",
    "config_hash",
    "coverage",
    "estimate_ground_truth",
    "fit_loglog",
    "fit_slope",
    "load_csv",
    "make_objective",
    "make_stream",
    "mis_sample",
    "normal_cdf",
    "normal_quantile",
    "run",
    "run_experiment",
    "sgd_step",
    "spectral_norm",
    "write_metrics_csv",
]
