"""Adiabatic elimination for two-timescale Lindblad master equations."""

__version__ = "0.1.0"

from .asymptotics import AssumptionReport, FastAnalysis, KrausMap, certify
from .config import DEFAULT, Tolerances
from .errors import (
    AssumptionError,
    DimensionError,
    InvariantError,
    ModelError,
    NumericalError,
    ParseError,
    PreconditionError,
    QaelError,
)
from .modelspec import ModelDefinition, load_model, model_from_dict, parse_expression
from .operators import LindbladGenerator
from .reduction import ReducedModel, build_reduced_model, kraus_parametrization
from .simulate import compare, epsilon_sweep, propagate, trace_distance

__all__ = [
    "AssumptionError",
    "AssumptionReport",
    "DEFAULT",
    "DimensionError",
    "FastAnalysis",
    "InvariantError",
    "KrausMap",
    "LindbladGenerator",
    "ModelDefinition",
    "ModelError",
    "NumericalError",
    "ParseError",
    "PreconditionError",
    "QaelError",
    "ReducedModel",
    "Tolerances",
    "build_reduced_model",
    "certify",
    "compare",
    "epsilon_sweep",
    "kraus_parametrization",
    "load_model",
    "model_from_dict",
    "parse_expression",
    "propagate",
    "trace_distance",
]
