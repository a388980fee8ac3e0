"""Population synthesis toolkit: deep generative models over categorical
agent records plus sampling-zero / structural-zero diagnostics."""

from . import cli, data, evaluation, models, nn_core, oracle, sampling, svgplot
from .errors import (
    ComparabilityError,
    DivergenceError,
    DomainError,
    EncodingError,
    IngestionError,
    SchemaError,
    ShapeError,
    SynthpopError,
)

__version__ = "0.1.0"

__all__ = [
    "cli",
    "data",
    "evaluation",
    "models",
    "nn_core",
    "oracle",
    "sampling",
    "svgplot",
    "SynthpopError",
    "ShapeError",
    "IngestionError",
    "SchemaError",
    "EncodingError",
    "ComparabilityError",
    "DivergenceError",
    "DomainError",
    "__version__",
]
