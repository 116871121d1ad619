"""Design-based estimation of spatial treatment effects under interference.

The package estimates the average marginalized response (AMR): the average
effect, on outcomes a distance ``d`` away, of switching one randomised
intervention node to treatment while the other nodes follow the design.
"""

from .errors import (
    AmrError,
    CapacityError,
    DomainError,
    EstimationError,
    KrigingError,
    MetricContractError,
    ParseError,
    ValidationError,
)
from .geometry import (
    EUCLIDEAN,
    GEODESIC,
    CircleSample,
    DistanceMetric,
    SpatialPoint,
    default_numpts,
    distance,
    sample_circle,
)
from .field import (
    ExponentialCovariance,
    KrigingModel,
    OutcomePoints,
    RasterGrid,
    field_value,
    fit_kriging,
    predict,
    raster_lookup,
)
from .estimator import (
    AmrCurve,
    Bernoulli,
    CircleAverageTable,
    Complete,
    InterventionSet,
    circle_average,
    circle_average_table,
    estimate_amr,
    hajek,
    horvitz_thompson,
    smooth_amr,
)
from .inference import (
    CumulativeTestResult,
    KernelSpec,
    PermutationResult,
    conley_se,
    cumulative_effect_test,
    kernel_weight,
    PRNG_NAME,
    percentile,
    permutation_test,
)
from .oracle import (
    EnumeratedTruth,
    StructuralModel,
    enumerate_truth,
    additive_truth,
    gamma_mixture_effect,
    jittered_grid_model,
    make_toy_example,
    simulate_realization,
    truncated_gamma_effect,
)

__version__ = "0.1.0"

__all__ = [
    "AmrError",
    "CapacityError",
    "DomainError",
    "EstimationError",
    "KrigingError",
    "MetricContractError",
    "ParseError",
    "ValidationError",
    "EUCLIDEAN",
    "GEODESIC",
    "CircleSample",
    "DistanceMetric",
    "SpatialPoint",
    "default_numpts",
    "distance",
    "sample_circle",
    "ExponentialCovariance",
    "KrigingModel",
    "OutcomePoints",
    "RasterGrid",
    "field_value",
    "fit_kriging",
    "predict",
    "raster_lookup",
    "AmrCurve",
    "Bernoulli",
    "CircleAverageTable",
    "Complete",
    "InterventionSet",
    "circle_average",
    "circle_average_table",
    "estimate_amr",
    "hajek",
    "horvitz_thompson",
    "smooth_amr",
    "CumulativeTestResult",
    "KernelSpec",
    "PermutationResult",
    "conley_se",
    "cumulative_effect_test",
    "kernel_weight",
    "PRNG_NAME",
    "percentile",
    "permutation_test",
    "EnumeratedTruth",
    "StructuralModel",
    "enumerate_truth",
    "additive_truth",
    "gamma_mixture_effect",
    "jittered_grid_model",
    "make_toy_example",
    "simulate_realization",
    "truncated_gamma_effect",
]
