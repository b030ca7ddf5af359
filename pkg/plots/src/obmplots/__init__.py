"""Figure rendering for experiment metrics CSVs."""

from .render import EXPECTED_COLUMNS, PanelSpec, RenderResult, SpecError, load_metrics, render

__version__ = "0.1.0"

__all__ = [
    "EXPECTED_COLUMNS",
    "PanelSpec",
    "RenderResult",
    "SpecError",
    "load_metrics",
    "render",
]
