"""Distance-sweep figure rendering for weighted sum-rate result tables."""

from .plot import Curve, PlotSpec, aggregate, load_records, render

__version__ = "0.1.0"
