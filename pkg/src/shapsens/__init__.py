"""Shapley effects and Sobol' indices for models with dependent inputs.

The package estimates variance-based sensitivity indices (Shapley effects,
full first-order and independent total Sobol' indices) for numerical models
whose inputs are statistically dependent, with exact closed forms for
linear-Gaussian problems and an optional kriging surrogate for expensive
models.
"""

from .analytic import (
    AnalyticIndices,
    LinearGaussianProblem,
    SandwichOrder,
    analytic_linear_gaussian,
    sandwich_direction,
    shapley_interaction_3d,
    shapley_linear_gaussian,
    sobol_linear_gaussian,
)
from .errors import (
    ConfigError,
    DegenerateOutputError,
    DistributionError,
    DomainError,
    ExternalModelError,
    FitError,
    IllConditionedError,
    ModelEvaluationError,
    SensitivityError,
    SizeError,
)
from .inputs import (
    CopulaJoint,
    GaussianJoint,
    GaussianMarginal,
    IndexSet,
    UniformMarginal,
    conditional_gaussian,
    quantile_transform,
    sample,
    sample_conditional,
)
from .kriging import (
    KrigingConfig,
    KrigingModel,
    as_model,
    fit,
    load_model,
    matern52,
    predict,
    q2,
    save_model,
    sobol_design,
)
from .models import (
    EvaluationBatch,
    ExternalModel,
    InteractionModel,
    IshigamiModel,
    LinearModel,
    ProjectionModel,
    evaluate,
    evaluate_external,
)
from .shapley import (
    EstimatorConfig,
    SensitivityResult,
    equivalent_permutations,
    estimate,
    estimate_variance,
    prefix_cost,
    shapley_exact,
    shapley_random,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticIndices",
    "ConfigError",
    "CopulaJoint",
    "DegenerateOutputError",
    "DistributionError",
    "DomainError",
    "EstimatorConfig",
    "EvaluationBatch",
    "ExternalModel",
    "ExternalModelError",
    "FitError",
    "GaussianJoint",
    "GaussianMarginal",
    "IllConditionedError",
    "IndexSet",
    "InteractionModel",
    "IshigamiModel",
    "KrigingConfig",
    "KrigingModel",
    "LinearGaussianProblem",
    "LinearModel",
    "ModelEvaluationError",
    "ProjectionModel",
    "SandwichOrder",
    "SensitivityError",
    "SensitivityResult",
    "SizeError",
    "UniformMarginal",
    "analytic_linear_gaussian",
    "as_model",
    "conditional_gaussian",
    "equivalent_permutations",
    "estimate",
    "estimate_variance",
    "evaluate",
    "evaluate_external",
    "fit",
    "load_model",
    "matern52",
    "predict",
    "prefix_cost",
    "q2",
    "quantile_transform",
    "sample",
    "sample_conditional",
    "sandwich_direction",
    "save_model",
    "shapley_exact",
    "shapley_interaction_3d",
    "shapley_linear_gaussian",
    "shapley_random",
    "sobol_design",
    "sobol_linear_gaussian",
]
