from .config import ExperimentConfig, load_config, parse_config
from .sweep import (
    SlopeEstimate,
    SweepRecord,
    SweepReport,
    argmin_points,
    boundary_integral,
    build_problem,
    concentration_report,
    estimate_slope,
    run_sweep,
    summarize,
)

__all__ = [
    "ExperimentConfig", "load_config", "parse_config",
    "SlopeEstimate", "SweepRecord", "SweepReport", "argmin_points", "boundary_integral", "build_problem",
    "concentration_report", "estimate_slope", "run_sweep", "summarize",
]
