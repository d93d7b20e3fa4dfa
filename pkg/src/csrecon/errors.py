"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes are inconsistent or unsupported (e.g. not a power of two)."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range."""
