"""Ready-made models, the JSON model format and a simulator."""

from .burglary import burglary_model
from .linear import discrete_hmm, linear_gaussian_ssm
from .modelfile import BUILTINS, load_model, model_to_dict, parse_model, serialize_model
from .quadrant import DEFAULT_DRIFTS, QUADRANT_BOXES, QuadrantConfig, quadrant_model, quadrant_of
from .simulate import Simulation, read_observations, simulate, simulation_csv

__all__ = [
    "BUILTINS",
    "DEFAULT_DRIFTS",
    "QUADRANT_BOXES",
    "QuadrantConfig",
    "Simulation",
    "burglary_model",
    "discrete_hmm",
    "linear_gaussian_ssm",
    "load_model",
    "model_to_dict",
    "parse_model",
    "quadrant_model",
    "quadrant_of",
    "read_observations",
    "serialize_model",
    "simulate",
    "simulation_csv",
]
