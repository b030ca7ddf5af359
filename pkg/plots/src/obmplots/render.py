"""Render multi-panel convergence figures from experiment metrics CSVs.

Input files follow the harness CSV contract exactly:

    checkpoint,err_spectral,err_frobenius,coverage,ci_width,mis,mean_truncations

One curve per CSV (typically one per dimension or configuration) in each of
four panels: estimation error, coverage probability, interval width, and mean
interval score. Error, width, and score are drawn on log-log axes; the error
panel carries a dashed reference line of fixed log-log slope anchored at the
first curve's first point. Rendering is read-only on its inputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EXPECTED_COLUMNS = (
    "checkpoint",
    "err_spectral",
    "err_frobenius",
    "coverage",
    "ci_width",
    "mis",
    "mean_truncations",
)

_PANELS = (
    ("err_spectral", "estimation error", "log"),
    ("coverage", "coverage probability", "linear"),
    ("ci_width", "interval width", "log"),
    ("mis", "interval score", "log"),
)


class SpecError(ValueError):
    """Invalid panel specification or malformed input CSV."""


@dataclass
class PanelSpec:
    """What to draw: metrics CSVs, their legend labels, the reference slope,
    and where to write the image."""

    csvs: list
    labels: list
    reference_slope: float = -0.125
    out: str | None = None

    def __post_init__(self):
        if not self.csvs:
            raise SpecError("spec needs at least one metrics CSV")
        if len(self.labels) != len(self.csvs):
            raise SpecError(
                f"{len(self.csvs)} CSVs but {len(self.labels)} labels; they must pair up"
            )

    @classmethod
    def from_json(cls, path) -> "PanelSpec":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecError(f"{path}: invalid JSON ({exc})") from None
        known = {"csvs", "labels", "reference_slope", "out"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise SpecError(f"{path}: unknown spec keys: {', '.join(unknown)}")
        if "csvs" not in doc:
            raise SpecError(f"{path}: spec must list csvs")
        return cls(
            csvs=list(doc["csvs"]),
            labels=list(doc.get("labels", [str(p) for p in doc["csvs"]])),
            reference_slope=float(doc.get("reference_slope", -0.125)),
            out=doc.get("out"),
        )


def load_metrics(path) -> dict:
    """Load one metrics CSV into column arrays, enforcing the exact schema."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SpecError(f"{path}: empty file")
        for got, want in zip(list(header) + [None] * len(EXPECTED_COLUMNS), EXPECTED_COLUMNS):
            if got != want:
                raise SpecError(f"{path}: schema mismatch at column {want!r} (found {got!r})")
        if len(header) != len(EXPECTED_COLUMNS):
            raise SpecError(f"{path}: schema mismatch at column {header[len(EXPECTED_COLUMNS)]!r} (unexpected)")
        rows = [rec for rec in reader if rec]
    if not rows:
        raise SpecError(f"{path}: no data rows")
    table = np.array([[float(x) for x in rec] for rec in rows])
    return {name: table[:, j] for j, name in enumerate(EXPECTED_COLUMNS)}


@dataclass
class RenderResult:
    """Handle on the drawn figure plus the reference-line data for checks."""

    figure: object
    reference_x: np.ndarray
    reference_y: np.ndarray
    out: str | None = None

    @property
    def measured_reference_slope(self) -> float:
        lx = np.log(self.reference_x)
        ly = np.log(self.reference_y)
        return float((ly[-1] - ly[0]) / (lx[-1] - lx[0]))


def render(spec: PanelSpec, out=None) -> RenderResult:
    """Draw the four-panel figure and write it to `out` (or `spec.out`).

    Returns the figure handle and the reference-line arrays so callers can
    verify the drawn slope. Inputs are opened read-only; rendering the same
    spec twice produces the image again from scratch.
    """
    datasets = [load_metrics(p) for p in spec.csvs]
    fig, axes = plt.subplots(1, 4, figsize=(18, 4))
    for ax, (column, title, yscale) in zip(axes, _PANELS):
        for data, label in zip(datasets, spec.labels):
            ax.plot(data["checkpoint"], data[column], marker="o", label=label)
        ax.set_xscale("log")
        ax.set_yscale(yscale)
        ax.set_xlabel("iteration")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
    axes[1].axhline(0.95, color="gray", linestyle=":", linewidth=1)
    axes[1].set_ylim(0.0, 1.05)

    # Reference decay line, anchored at the first curve's first error point.
    first = datasets[0]
    x = first["checkpoint"]
    y0 = first["err_spectral"][0]
    ref_y = np.exp(np.log(y0) + spec.reference_slope * (np.log(x) - np.log(x[0])))
    axes[0].plot(x, ref_y, "r--", label=f"slope {spec.reference_slope:g}")
    for ax in axes:
        ax.legend(fontsize=8)
    fig.tight_layout()

    target = out if out is not None else spec.out
    if target is not None:
        fig.savefig(target, dpi=120)
    return RenderResult(figure=fig, reference_x=x, reference_y=ref_y, out=target)
