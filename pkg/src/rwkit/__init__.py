"""Move a CIR++ credit-intensity model from the risk-neutral to the real-world measure."""
from .cirpp import CirParams, credit_spread, cumulative_hazard, hazard_from_spread, spread_from_hazard
from .estimator import RealWorldCalibrator
from .market_curve import MarketCurve, ingest_spread_curve
from .mc_engine import PathGrid, simulate_ensemble, summarize
from .measure_change import StepAlpha, TargetSet, calibrate_alpha
from .scenario import ScenarioSpec, emit_reports, load_scenario, run_scenario

__all__ = [
    "CirParams", "credit_spread", "cumulative_hazard", "hazard_from_spread", "spread_from_hazard",
    "RealWorldCalibrator", "MarketCurve", "ingest_spread_curve", "PathGrid", "simulate_ensemble",
    "summarize", "StepAlpha", "TargetSet", "calibrate_alpha", "ScenarioSpec", "emit_reports",
    "load_scenario", "run_scenario",
]
