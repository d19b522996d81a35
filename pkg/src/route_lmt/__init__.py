"""Budgeted routing engine for two-tier hybrid machine-translation serving.

Trains a marginal-gain predictor on exported small-model representations,
allocates a fixed large-model call budget by predicted gain, and measures
routing policies with ranking, allocation, sweep and risk metrics.
"""

from .core import (
    Direction,
    RequestRecord,
    RiskBucket,
    Route,
    RoutingDecision,
    bucket_gain,
    decompose,
    gain,
    system_quality,
)
from .evaluation import (
    EvalReport,
    ParetoCurve,
    RiskHistogram,
    evaluate_router,
    hit_rate_at_p,
    mean_delta_at_p,
    pareto_sweep,
    risk_histogram,
    spearman,
)
from .heads import LinearHead, Target
from .ingest import (
    Dataset,
    FreqTable,
    Independent,
    PlantedLinear,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    load_freq_table,
    load_head,
    load_profile,
    save_dataset,
    save_head,
    save_profile,
)
from .policy import (
    BudgetMode,
    BudgetState,
    CalibrationProfile,
    ProfileEntry,
    calibrate_threshold,
    route_guarded,
    route_stream,
    route_top_p,
)
from .scorers import Scorer, make_scorer
from .trainer import TrainReport, evaluate_head, fit_linear_head, split_dataset

__version__ = "0.1.0"

__all__ = [
    "BudgetMode",
    "BudgetState",
    "CalibrationProfile",
    "Dataset",
    "Direction",
    "EvalReport",
    "FreqTable",
    "Independent",
    "LinearHead",
    "ParetoCurve",
    "PlantedLinear",
    "ProfileEntry",
    "RequestRecord",
    "RiskBucket",
    "RiskHistogram",
    "Route",
    "RoutingDecision",
    "Scorer",
    "SyntheticConfig",
    "Target",
    "TrainReport",
    "bucket_gain",
    "calibrate_threshold",
    "decompose",
    "evaluate_head",
    "evaluate_router",
    "fit_linear_head",
    "gain",
    "generate_synthetic",
    "hit_rate_at_p",
    "load_dataset",
    "load_freq_table",
    "load_head",
    "load_profile",
    "make_scorer",
    "mean_delta_at_p",
    "pareto_sweep",
    "risk_histogram",
    "route_guarded",
    "route_stream",
    "route_top_p",
    "save_dataset",
    "save_head",
    "save_profile",
    "spearman",
    "split_dataset",
    "system_quality",
]
