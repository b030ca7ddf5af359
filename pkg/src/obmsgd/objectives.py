"""Gradient oracles for the supported loss models.

The optimizer only ever consumes gradients; Hessians are included for the
analytic cross-checks in the tests (the covariance estimator itself is
deliberately Hessian-free).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit


class Sample(NamedTuple):
    """One observation: feature vector `u` and scalar label `y`."""

    u: np.ndarray
    y: float


def _check_pair(theta: np.ndarray, s: Sample) -> None:
    if s.u.shape != theta.shape:
        raise ValueError(f"feature shape {s.u.shape} does not match iterate shape {theta.shape}")
    if not (np.isfinite(theta).all() and np.isfinite(s.u).all() and np.isfinite(s.y)):
        raise ValueError("non-finite input to gradient oracle")


class LinearSquaredLoss:
    """Squared-error regression loss, 0.5 * (y - u.theta)**2.

    The half factor gives the clean gradient -(y - u.theta) * u and makes the
    averaged design matrix coincide with the Hessian. Rescaling the loss by a
    fixed positive constant moves neither the minimizer nor interval coverage,
    so the convention is free; it is recorded in the experiment config.
    """

    kind = "linear_sq"
    reg = 0.0

    def loss(self, theta: np.ndarray, s: Sample) -> float:
        resid = s.y - float((s.u * theta).sum())
        return 0.5 * resid * resid

    def grad(self, theta: np.ndarray, s: Sample) -> np.ndarray:
        _check_pair(theta, s)
        resid = s.y - float((s.u * theta).sum())
        return (-resid) * s.u

    def hessian(self, theta: np.ndarray, s: Sample) -> np.ndarray:
        _check_pair(theta, s)
        return np.outer(s.u, s.u)


class LogisticL2:
    """Binary logistic loss with labels in {-1, +1} and an l2 penalty.

    The penalty (reg/2) * ||theta||^2 adds reg * theta to the gradient and
    makes the objective reg-strongly convex, which the plain logistic loss is
    not. Labels are stored as -1/+1 internally; {0, 1} labels are mapped at
    ingestion by the data streams, not here.
    """

    kind = "logistic_l2"

    def __init__(self, reg: float = 0.005):
        if reg < 0 or not np.isfinite(reg):
            raise ValueError(f"regularization must be nonnegative, got {reg}")
        self.reg = float(reg)

    def _margin(self, theta: np.ndarray, s: Sample) -> float:
        y = float(s.y)
        if y not in (-1.0, 1.0):
            raise ValueError(f"logistic labels must be -1 or +1, got {s.y}")
        return y, float((s.u * theta).sum())

    def loss(self, theta: np.ndarray, s: Sample) -> float:
        y, m = self._margin(theta, s)
        return float(np.logaddexp(0.0, -y * m)) + 0.5 * self.reg * float((theta * theta).sum())

    def grad(self, theta: np.ndarray, s: Sample) -> np.ndarray:
        _check_pair(theta, s)
        y, m = self._margin(theta, s)
        return (-y * float(expit(-y * m))) * s.u + self.reg * theta

    def hessian(self, theta: np.ndarray, s: Sample) -> np.ndarray:
        _check_pair(theta, s)
        _, m = self._margin(theta, s)
        p = float(expit(m))
        return p * (1.0 - p) * np.outer(s.u, s.u) + self.reg * np.eye(theta.shape[0])


def make_objective(kind: str, reg: float = 0.0):
    """Objective factory keyed by the config-level kind string."""
    if kind == "linear_sq":
        if reg != 0.0:
            raise ValueError("linear_sq takes no regularization; reg must be 0")
        return LinearSquaredLoss()
    if kind == "logistic_l2":
        return LogisticL2(reg=reg)
    raise ValueError(f"unknown objective kind {kind!r}")
