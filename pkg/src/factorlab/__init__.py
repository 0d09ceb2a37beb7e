"""Representation-agnostic factor algebra and inference.

Importing the package registers every representation with the dispatcher.
"""

from . import gaussian, sample, table  # noqa: F401  (registrations)
from .core import (
    Factor,
    ScalarFactor,
    Summary,
    Variable,
    add,
    continuous,
    discrete,
    divide,
    evaluate,
    log_evaluate,
    log_scalar,
    multiply,
    normalize,
    project,
    reduce,
    rename,
    sum_out,
    summarize,
    supported,
)
from .errors import FactorError
from .gaussian import CanonicalGaussian, MixtureFactor, MomentGaussian, from_moment, linear_gaussian, to_moment
from .hybrid import ConditionalFactor, IndicatorFactor, TruncatedGaussian, truncate
from .inference import (
    FactorGraphModel,
    FilterResult,
    StateSpaceModel,
    elimination_order,
    filter,
    filter_step,
    smooth,
    variable_elimination,
)
from .sample import SampleFactor, estimate_moments, resample_systematic, sample_from, sample_prior
from .table import SparseTableFactor, TableFactor, to_dense, to_sparse

__version__ = "0.1.0"

__all__ = [
    "CanonicalGaussian",
    "ConditionalFactor",
    "Factor",
    "FactorError",
    "FactorGraphModel",
    "FilterResult",
    "IndicatorFactor",
    "MixtureFactor",
    "MomentGaussian",
    "SampleFactor",
    "ScalarFactor",
    "SparseTableFactor",
    "StateSpaceModel",
    "Summary",
    "TableFactor",
    "TruncatedGaussian",
    "Variable",
    "add",
    "continuous",
    "discrete",
    "divide",
    "elimination_order",
    "estimate_moments",
    "evaluate",
    "filter",
    "filter_step",
    "from_moment",
    "linear_gaussian",
    "log_evaluate",
    "log_scalar",
    "multiply",
    "normalize",
    "project",
    "reduce",
    "rename",
    "resample_systematic",
    "sample_from",
    "sample_prior",
    "smooth",
    "sum_out",
    "summarize",
    "supported",
    "to_dense",
    "to_moment",
    "to_sparse",
    "truncate",
    "variable_elimination",
]
