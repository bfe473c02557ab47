"""Count time-series models with parametric and tilted variance laws."""

__version__ = "0.1.0"

from .backend import backend_name
from .data import (
    FittedState,
    MeanModelSpec,
    ModelParams,
    ParamBounds,
    TimeSeries,
    validate_dataset,
)
from .engine import (
    NegBinVariance,
    PoissonVariance,
    SemiparametricVariance,
    recurse,
)
from .errors import (
    BoundsError,
    DegenerateSupportError,
    DimensionError,
    InfeasibleMean,
    NonConvergenceError,
    NonFiniteError,
    NonIntegerCountError,
    StateExplosion,
    TiltseriesError,
)
from .tilt import (
    AtomicDistribution,
    solve_tilt,
    tilted_cdf,
    tilted_moments,
    tilted_normalizer,
    tilted_pmf,
    tilted_weights,
)

__all__ = [
    "__version__",
    "backend_name",
    "AtomicDistribution",
    "BoundsError",
    "DegenerateSupportError",
    "DimensionError",
    "FittedState",
    "InfeasibleMean",
    "MeanModelSpec",
    "ModelParams",
    "NegBinVariance",
    "NonConvergenceError",
    "NonFiniteError",
    "NonIntegerCountError",
    "ParamBounds",
    "PoissonVariance",
    "SemiparametricVariance",
    "StateExplosion",
    "TiltseriesError",
    "TimeSeries",
    "recurse",
    "solve_tilt",
    "tilted_cdf",
    "tilted_moments",
    "tilted_normalizer",
    "tilted_pmf",
    "tilted_weights",
    "validate_dataset",
]
