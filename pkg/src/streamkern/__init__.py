"""Streaming projection estimators for kernel regression."""

from .additive import AdditiveEstimator, AdditiveFeatures
from .baselines import KrrModel, SgdModel, krr_fit, krr_predict, sgd_predict, sgd_step
from .eigensystems import (
    ConfigurationError,
    EigenSystem,
    Gaussian,
    PeriodicBernoulli,
    PolyAugmented,
    SobolevMin,
    TensorProduct,
    augment_with_polynomials,
    make_system,
)
from .projection import (
    DegeneratePivotError,
    EstimatorConfig,
    InitializationError,
    NotReadyError,
    ProjectionEstimator,
    schedule_basis_count,
)
from .simulate import ExperimentSpec, PRESETS, get_preset, run_experiment

__all__ = [
    "AdditiveEstimator", "AdditiveFeatures", "ConfigurationError", "DegeneratePivotError",
    "EigenSystem", "EstimatorConfig", "ExperimentSpec", "Gaussian", "InitializationError",
    "KrrModel", "NotReadyError", "PRESETS", "PeriodicBernoulli", "PolyAugmented",
    "ProjectionEstimator", "SgdModel", "SobolevMin", "TensorProduct", "augment_with_polynomials",
    "get_preset", "krr_fit", "krr_predict", "make_system", "run_experiment",
    "schedule_basis_count", "sgd_predict", "sgd_step",
]
