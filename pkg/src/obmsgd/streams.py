"""Data-stream generators: i.i.d. designs, autoregressive feature chains whose
transitions may depend on the current iterate, and a strategic agent
population that adapts its features to the classifier being trained.

Every stream exposes ``sample(theta) -> Sample`` and ``reset()``. Streams are
single-owner and sequential; independent replications should each construct
their own stream from a seed-split child. Two generators are derived from the
seed: one for per-step noise and one for initial-law draws (construction and
resets), so a rare reset never shifts the alignment of the step noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from .objectives import Sample

__all__ = [
    "IidStream",
    "MarkovChainStream",
    "ar1_stream",
    "AgentPopulation",
    "AgentStream",
    "load_csv",
    "make_stream",
]

_LABEL_MODES = ("gaussian", "bernoulli")


def _pair_of_generators(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    step_ss, reset_ss = ss.spawn(2)
    return np.random.default_rng(step_ss), np.random.default_rng(reset_ss)


def _check_theta(theta: np.ndarray, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (d,):
        raise ValueError(f"iterate has shape {theta.shape}, expected ({d},)")
    if not np.isfinite(theta).all():
        raise ValueError("non-finite iterate passed to stream")
    return theta


def _label(mean: float, noise_slot: float, sigma: float, mode: str) -> float:
    if mode == "gaussian":
        return mean + sigma * noise_slot
    # Bernoulli through the logistic link; the standard-normal slot maps to a
    # uniform via the normal CDF so one draw layout serves both label modes.
    return 1.0 if float(ndtr(noise_slot)) < float(expit(mean)) else -1.0


class IidStream:
    """Independent draws u ~ N(0, sigma^2 I) with labels from a fixed
    generating parameter: gaussian y = u.theta_r + noise, or a Bernoulli
    {-1,+1} label through the logistic link. Ignores the current iterate."""

    def __init__(self, theta_r: np.ndarray, sigma: float = 1.0, *, labels: str = "gaussian", seed=None):
        if not (sigma > 0) or not math.isfinite(sigma):
            raise ValueError(f"noise scale sigma must be positive and finite, got {sigma}")
        if labels not in _LABEL_MODES:
            raise ValueError(f"labels must be one of {_LABEL_MODES}, got {labels!r}")
        self.theta_r = np.asarray(theta_r, dtype=float)
        self.sigma = float(sigma)
        self.labels = labels
        self._step_gen, self._reset_gen = _pair_of_generators(seed)

    @property
    def d(self) -> int:
        return self.theta_r.shape[0]

    def sample(self, theta) -> Sample:
        _check_theta(theta, self.d)
        z = self._step_gen.standard_normal(self.d + 1)
        u = self.sigma * z[: self.d]
        mean = float((u * self.theta_r).sum())
        return Sample(u, _label(mean, z[self.d], self.sigma, self.labels))

    def reset(self) -> None:
        """No-op: an i.i.d. stream is always at its initial law."""


class MarkovChainStream:
    """Autoregressive feature chain, optionally coupled to the iterate.

    Per step, with fresh v ~ N(0, sigma^2 I_d) and scalar w ~ N(0, sigma^2):

        u <- (1 - rho) * u_prev + rho * v + rho * eps * w * theta

    The eps term couples the transition kernel to the current iterate theta;
    eps = 0 gives a state-independent AR(1) chain. Labels come from the fixed
    generating parameter theta_r as in `IidStream`. `reset` redraws u from
    the initial law N(0, sigma^2 I).
    """

    def __init__(
        self,
        theta_r: np.ndarray,
        rho: float = 0.5,
        eps: float = 0.5,
        sigma: float = 1.0,
        *,
        labels: str = "gaussian",
        seed=None,
    ):
        if not (0.0 < rho < 1.0):
            raise ValueError(f"mixing rate rho must lie in (0, 1), got {rho}")
        if not (sigma > 0) or not math.isfinite(sigma):
            raise ValueError(f"noise scale sigma must be positive and finite, got {sigma}")
        if not math.isfinite(eps):
            raise ValueError(f"state-coupling strength must be finite, got {eps}")
        if labels not in _LABEL_MODES:
            raise ValueError(f"labels must be one of {_LABEL_MODES}, got {labels!r}")
        self.theta_r = np.asarray(theta_r, dtype=float)
        self.rho = float(rho)
        self.eps = float(eps)
        self.sigma = float(sigma)
        self.labels = labels
        self._step_gen, self._reset_gen = _pair_of_generators(seed)
        self._drift = self.rho * self.eps * self.sigma
        self._u = self.sigma * self._reset_gen.standard_normal(self.d)

    @property
    def d(self) -> int:
        return self.theta_r.shape[0]

    def sample(self, theta) -> Sample:
        theta = _check_theta(theta, self.d)
        d = self.d
        z = self._step_gen.standard_normal(d + 2)
        u = (
            (1.0 - self.rho) * self._u
            + (self.rho * self.sigma) * z[:d]
            + self._drift * (z[d] * theta)
        )
        self._u = u
        mean = float((u * self.theta_r).sum())
        return Sample(u, _label(mean, z[d + 1], self.sigma, self.labels))

    def reset(self) -> None:
        """Redraw the chain state from its initial law; the step-noise stream
        continues without reuse."""
        self._u = self.sigma * self._reset_gen.standard_normal(self.d)


def ar1_stream(theta_r, rho: float = 0.5, sigma: float = 1.0, *, labels: str = "gaussian", seed=None):
    """State-independent AR(1) chain: the coupled chain with eps pinned to 0."""
    return MarkovChainStream(theta_r, rho=rho, eps=0.0, sigma=sigma, labels=labels, seed=seed)


@dataclass
class AgentPopulation:
    """Pool of strategic agents with partially modifiable features.

    Each agent carries current features (row of `features`), an anchor
    `base_features` that entering a different feature value is costed
    against, and a fixed label. Only coordinates flagged in `modifiable` ever
    change. `alpha` is the agents' gradient-ascent step, `lam` the cost
    sensitivity (quadratic cost ||u_S - u0_S||^2 / (2 lam)), and `n_update`
    how many randomly chosen agents move per round.
    """

    features: np.ndarray
    base_features: np.ndarray
    modifiable: np.ndarray
    labels: np.ndarray
    alpha: float = 0.005
    lam: float = 0.01
    n_update: int = 50

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.base_features = np.asarray(self.base_features, dtype=float)
        self.modifiable = np.asarray(self.modifiable, dtype=bool)
        self.labels = np.asarray(self.labels, dtype=float)
        m, d = self.features.shape
        if self.base_features.shape != (m, d):
            raise ValueError("base_features shape does not match features")
        if self.modifiable.shape != (d,):
            raise ValueError(f"modifiable mask must have shape ({d},)")
        if self.labels.shape != (m,):
            raise ValueError(f"labels must have shape ({m},)")
        if not np.isin(self.labels, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        if not (1 <= self.n_update <= m):
            raise ValueError(f"n_update must lie in [1, {m}], got {self.n_update}")
        if not (self.alpha > 0 and self.lam > 0):
            raise ValueError("alpha and lam must be positive")
        fixed = ~self.modifiable
        if not np.array_equal(self.features[:, fixed], self.base_features[:, fixed]):
            raise ValueError("non-modifiable coordinates must equal their base values")

    @property
    def n_agents(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def best_response_round(self, theta: np.ndarray, rng: np.random.Generator) -> None:
        """One gradient-ascent round toward the quadratic-cost best response.

        A uniformly random subset of `n_update` agents nudges its modifiable
        coordinates by alpha * (theta_S - (u_S - u0_S) / lam); the fixed point
        of full participation under constant theta is base + lam * theta on
        the modifiable block. Non-modifiable coordinates are never touched.
        """
        cols = np.flatnonzero(self.modifiable)
        if cols.size == 0:
            return
        if self.n_update == self.n_agents:
            rows = np.arange(self.n_agents)
        else:
            rows = rng.choice(self.n_agents, size=self.n_update, replace=False)
        sel = np.ix_(rows, cols)
        current = self.features[sel]
        anchor = self.base_features[sel]
        self.features[sel] = current + self.alpha * (theta[cols] - (current - anchor) / self.lam)


class AgentStream:
    """Serves one uniformly chosen agent's (features, label) per step, after
    running a best-response round against the current iterate. Per-step cost
    does not depend on the population size beyond the round update itself."""

    def __init__(self, population: AgentPopulation, seed=None):
        self._pop = population
        self._initial = population.features.copy()
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._rng = np.random.default_rng(ss)

    @property
    def d(self) -> int:
        return self._pop.d

    @property
    def population(self) -> AgentPopulation:
        return self._pop

    def sample(self, theta) -> Sample:
        theta = _check_theta(theta, self.d)
        self._pop.best_response_round(theta, self._rng)
        j = int(self._rng.integers(self._pop.n_agents))
        return Sample(self._pop.features[j].copy(), float(self._pop.labels[j]))

    def reset(self) -> None:
        """Restore every agent's features to their state at construction."""
        self._pop.features[:] = self._initial


_NA_TOKENS = {"", "na", "nan", "n/a", "null", "none"}


def _parse_cell(cell: str, row: int, col: str) -> float:
    text = cell.strip()
    if text.lower() in _NA_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"unparseable cell at row {row}, column {col!r}: {cell!r}") from None


def load_csv(
    path,
    label_column: str,
    modifiable_columns,
    *,
    n_agents: int | None = None,
    seed=None,
    clip_quantiles: tuple[float, float] | None = (0.01, 0.99),
    alpha: float = 0.005,
    lam: float = 0.01,
    n_update: int = 50,
) -> AgentPopulation:
    """Build an agent population from a numeric CSV table.

    Expects a comma-separated file with a header row, UTF-8, "." decimals.
    All non-label columns become features, in header order. Rows with missing
    or non-finite values are dropped. Feature columns are then clipped to the
    given quantiles (pass None to skip) and z-scored per column; binary {0,1}
    labels map to {-1,+1}. When `n_agents` is given, that many rows are
    subsampled without replacement using `seed`, so reloading with the same
    seed reproduces the population.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        raw = [row for row in reader if row]

    if label_column not in header:
        raise ValueError(f"label column {label_column!r} not found; file has {header}")
    feature_names = [h for h in header if h != label_column]
    for name in modifiable_columns:
        if name not in feature_names:
            raise ValueError(f"modifiable column {name!r} not found among features {feature_names}")

    table = np.array(
        [[_parse_cell(cell, i + 2, header[j]) for j, cell in enumerate(row)] for i, row in enumerate(raw)],
        dtype=float,
    ).reshape(len(raw), len(header))
    keep = np.isfinite(table).all(axis=1)
    table = table[keep]
    if table.shape[0] == 0:
        raise ValueError(f"{path}: no complete rows after dropping missing values")

    label_idx = header.index(label_column)
    labels = table[:, label_idx]
    feat_idx = [j for j in range(len(header)) if j != label_idx]
    features = table[:, feat_idx]

    values = set(np.unique(labels))
    if values <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0
    elif not values <= {-1.0, 1.0}:
        raise ValueError(f"label column {label_column!r} must be binary, found values {sorted(values)}")

    if clip_quantiles is not None:
        lo, hi = np.quantile(features, clip_quantiles[0], axis=0), np.quantile(
            features, clip_quantiles[1], axis=0
        )
        features = np.clip(features, lo, hi)
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd[sd == 0.0] = 1.0
    features = (features - mu) / sd

    if n_agents is not None:
        if n_agents > features.shape[0]:
            raise ValueError(f"requested {n_agents} agents but only {features.shape[0]} rows survive cleaning")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(features.shape[0], size=n_agents, replace=False))
        features = features[idx]
        labels = labels[idx]

    mask = np.array([name in set(modifiable_columns) for name in feature_names])
    return AgentPopulation(
        features=features,
        base_features=features.copy(),
        modifiable=mask,
        labels=labels,
        alpha=alpha,
        lam=lam,
        n_update=n_update,
    )


def make_stream(kind: str, theta_r=None, *, rho=0.5, eps=0.5, sigma=1.0, labels="gaussian", seed=None, population=None):
    """Stream factory keyed by the config-level kind string."""
    if kind == "iid":
        return IidStream(theta_r, sigma, labels=labels, seed=seed)
    if kind == "ar1":
        return ar1_stream(theta_r, rho=rho, sigma=sigma, labels=labels, seed=seed)
    if kind == "state_dep":
        return MarkovChainStream(theta_r, rho=rho, eps=eps, sigma=sigma, labels=labels, seed=seed)
    if kind == "agents":
        if population is None:
            raise ValueError("agents stream requires a population")
        return AgentStream(population, seed=seed)
    raise ValueError(f"unknown stream kind {kind!r}")
