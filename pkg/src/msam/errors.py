"""Exception hierarchy shared across the package."""


class MsamError(Exception):
    """Base class for all package errors."""


class GeometryError(MsamError):
    """Convolution geometry is inconsistent (e.g. input shorter than kernel)."""


class GradientShapeError(MsamError):
    """Upstream gradient shape does not match the forward output."""


class FormatError(MsamError):
    """An input file violates the expected format; names the offending field."""


class DegenerateInputError(MsamError):
    """Numerically degenerate input (e.g. zero variance before normalization)."""


class ValidationError(MsamError):
    """Invalid configuration or model specification."""
