"""Exception types shared across the toolkit."""


class SynthpopError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(SynthpopError):
    """Array dimensions do not match what an operation requires."""


class IngestionError(SynthpopError):
    """A raw input file is malformed (ragged rows, bad numerics, ...)."""


class SchemaError(SynthpopError):
    """A schema is empty, degenerate, or referenced variables are unknown."""


class EncodingError(SynthpopError):
    """A category code or one-hot row is invalid for its schema."""


class ComparabilityError(SynthpopError):
    """Two histograms or tables cannot be compared (different subsets/schemas)."""


class DivergenceError(SynthpopError):
    """Training produced non-finite losses or gradients."""


class DomainError(SynthpopError):
    """A value lies outside the mathematical domain of an operation."""
