"""Stabilized sufficient dimension reduction for QDA classification.

Build a discriminant matrix from shrinkage-stabilized precision estimates
and raw covariance differences, project onto its leading singular
directions, and classify in the reduced space with quadratic discriminant
analysis. Includes five precision estimators, the exact-parameter
preservation machinery, and Monte Carlo / cross-validation benchmarking
harnesses with a CLI.
"""

__version__ = "0.1.0"

from .datamodel import (
    ClassSummary,
    LabeledDataset,
    jitter,
    load_csv,
    standardize,
    summarize,
    write_csv,
)
from .estimators import (
    PrecisionEstimate,
    PrecisionEstimatorSpec,
    bodnar,
    estimate,
    haff,
    mry,
    sample_inverse,
    wang,
)
from .experiments import (
    PipelineSpec,
    SimulationConfig,
    mvn_sample,
    repeated_kfold_cv,
    run_mc_study,
    select_dimension,
    simulation_config,
    tune_lambda,
)
from .qda import CerReport, QdaModel, classify, conditional_error_rate, fit, scores
from .reduction import (
    ProjectionBasis,
    TheoremFixture,
    build_discriminant_matrix,
    project,
    projection_basis,
    qda_invariance_check,
    random_theorem_fixture,
    subspace_identity_residuals,
    theorem_fixture,
)

__all__ = [
    "__version__",
    "ClassSummary", "LabeledDataset", "jitter", "load_csv", "standardize",
    "summarize", "write_csv",
    "PrecisionEstimate", "PrecisionEstimatorSpec", "bodnar", "estimate",
    "haff", "mry", "sample_inverse", "wang",
    "PipelineSpec", "SimulationConfig", "mvn_sample", "repeated_kfold_cv",
    "run_mc_study", "select_dimension", "simulation_config", "tune_lambda",
    "CerReport", "QdaModel", "classify", "conditional_error_rate", "fit",
    "scores",
    "ProjectionBasis", "TheoremFixture", "build_discriminant_matrix",
    "project", "projection_basis", "qda_invariance_check",
    "random_theorem_fixture", "subspace_identity_residuals", "theorem_fixture",
]
