"""Regime-aware time-series toolkit for rollup adoption and L1 fee congestion."""

__version__ = "0.1.0"

from . import cfact, estimators, inference, iv, measures, panel, synth, tsdiag  # noqa: E402,F401
from .errors import L2CongestionError  # noqa: E402,F401
