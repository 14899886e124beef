"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Inputs violate a geometric precondition (non-concircular, degenerate pair, ...)."""


class DataError(ValueError):
    """Malformed or inconsistent input data (shape mismatch, corner mismatch, ...)."""


class DegeneracyError(GeometryError):
    """A construction hit a degenerate vertex (non-immersion, sin(omega) ~ 0)."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class SingularConfigurationError(GeometryError):
    """A transform collided with its base surface (parallel bundle meets f)."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class NotFlatError(GeometryError):
    """A connection fails the flatness threshold, so no trivialising gauge exists."""


class PoleError(GeometryError):
    """A spectral parameter hit a pole of the connection family."""
