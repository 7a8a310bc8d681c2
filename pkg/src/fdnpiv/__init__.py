"""Causal flow-occupancy curves via Bayesian nonparametric instrumental variables."""

from .analysis import CapacityReport, capacity_report, detect_capacity_drop, extract_capacity
from .baselines import PolySpec, fit_2sls, fit_pols, weak_instrument_ftest
from .ingest import (DetectorRecord, RegressionSample, SiteConfig, build_lagged_instrument,
                     read_detector_csv)
from .mixture import MixturePrior, conditional_shift, stick_breaking
from .npiv import McmcConfig, PosteriorDraws, SplinePriors, fit_np, fit_npiv
from .splines import KnotVector, design_matrix, make_knots, penalty
from .summary import CurveBand, error_density_grid, pointwise_summary, simultaneous_band

__version__ = "0.1.0"

__all__ = [
    "CapacityReport", "CurveBand", "DetectorRecord", "KnotVector", "McmcConfig",
    "MixturePrior", "PolySpec", "PosteriorDraws", "RegressionSample", "SiteConfig",
    "SplinePriors", "build_lagged_instrument", "capacity_report", "conditional_shift",
    "design_matrix", "detect_capacity_drop", "error_density_grid", "extract_capacity",
    "fit_2sls", "fit_np", "fit_npiv", "fit_pols", "make_knots", "penalty",
    "pointwise_summary", "read_detector_csv", "simultaneous_band", "stick_breaking",
    "weak_instrument_ftest",
]
