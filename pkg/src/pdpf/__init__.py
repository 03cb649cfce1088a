"""Probabilistic distribution power flow with sample-smoothed densities."""

from __future__ import annotations

__version__ = "0.1.0"

from .density import DensityEstimate, TuningConfig, estimate_pdf, tune_bandwidth
from .engines import EngineResult, compare_engines, run_fsds, run_mcs, run_tpem, run_ut
from .feeder import Branch, Feeder, Node, feeder_from_dict, load_feeder
from .metrics import MomentVector, moments, relative_error
from .solver import SolverConfig, VoltageSolution, solve_fbs, solve_reference
from .uncertainty import ScenarioSpec, build_samples, load_scenario

__all__ = [
    "Branch", "DensityEstimate", "EngineResult", "Feeder", "MomentVector", "Node",
    "ScenarioSpec", "SolverConfig", "TuningConfig", "VoltageSolution", "build_samples",
    "compare_engines", "estimate_pdf", "feeder_from_dict", "load_feeder", "load_scenario",
    "moments", "relative_error", "run_fsds", "run_mcs", "run_tpem", "run_ut",
    "solve_fbs", "solve_reference", "tune_bandwidth",
]
