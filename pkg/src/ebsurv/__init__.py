"""Neural survival models normalized by construction.

An energy network over (time, covariates) defines an unnormalized
density; integrating it numerically on the observed window plus a
closed-form tail lump yields survival probabilities, a censoring-aware
training loss, and replacement decisions, with discrete-time hazard and
mass baselines for comparison.
"""

from .backend import active_backend
from .data import NormalizationStats, SurvivalData, SurvivalRecord
from .datagen import (
    FleetConfig,
    SimConfig,
    WeibullParams,
    gen_fleet_like,
    gen_sim_dataset,
    sample_weibull,
    split_dataset,
    weibull_density,
    weibull_survival,
)
from .dataio import (
    load_model,
    normalize_features,
    read_dataset,
    save_model,
    write_dataset,
)
from .ebm import (
    EnergyModel,
    Integration,
    initialize_energy_model,
    nll,
    train,
    validation_nll,
)
from .errors import (
    DataFormatError,
    DegenerateRocError,
    EbsurvError,
    NonFiniteError,
    OutOfSupportError,
    ShapeError,
)
from .evaluation import (
    ConvergencePoint,
    KsReport,
    RocCurve,
    WeibullOracle,
    auc,
    integration_convergence_report,
    ks_distance,
    ks_report,
    mean_ks,
    roc_curve,
    roc_from_scores,
)
from .baselines import (
    DiscreteGrid,
    MarginalHazardModel,
    PchModel,
    PmfModel,
    initialize_baseline,
    pch_nll,
    pch_survival,
    pmf_nll,
    pmf_survival,
    train_baseline,
)
from .maintenance import (
    DecisionConfig,
    MaintenanceDecision,
    conditional_survival,
    decide,
    decide_batch,
    write_decisions,
)
from .nn import (
    AdamState,
    GradCheckReport,
    MlpConfig,
    ParameterSet,
    adam_update,
    gradient_check,
    mlp_forward,
)
from .training import TrainConfig, TrainHistory

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ConvergencePoint",
    "DataFormatError",
    "DecisionConfig",
    "DegenerateRocError",
    "DiscreteGrid",
    "EbsurvError",
    "EnergyModel",
    "FleetConfig",
    "GradCheckReport",
    "Integration",
    "KsReport",
    "MaintenanceDecision",
    "MarginalHazardModel",
    "MlpConfig",
    "NonFiniteError",
    "NormalizationStats",
    "OutOfSupportError",
    "ParameterSet",
    "PchModel",
    "PmfModel",
    "RocCurve",
    "ShapeError",
    "SimConfig",
    "SurvivalData",
    "SurvivalRecord",
    "TrainConfig",
    "TrainHistory",
    "WeibullOracle",
    "WeibullParams",
    "active_backend",
    "adam_update",
    "auc",
    "conditional_survival",
    "decide",
    "decide_batch",
    "gen_fleet_like",
    "gen_sim_dataset",
    "gradient_check",
    "initialize_baseline",
    "initialize_energy_model",
    "integration_convergence_report",
    "ks_distance",
    "ks_report",
    "load_model",
    "mean_ks",
    "mlp_forward",
    "nll",
    "normalize_features",
    "pch_nll",
    "pch_survival",
    "pmf_nll",
    "pmf_survival",
    "read_dataset",
    "roc_curve",
    "roc_from_scores",
    "sample_weibull",
    "save_model",
    "split_dataset",
    "train",
    "train_baseline",
    "validation_nll",
    "weibull_density",
    "weibull_survival",
    "write_dataset",
    "write_decisions",
]
