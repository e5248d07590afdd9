"""Exception types shared across the package."""


class LLPError(Exception):
    """Base class for all package errors."""


class SingularMatrix(LLPError, ValueError):
    """Raised when a matrix is singular or too ill-conditioned to invert."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ConvergenceFailure(LLPError, RuntimeError):
    """Raised when an iterative solver hits its iteration cap.

    The best iterate seen so far is kept on ``best`` so callers can decide
    whether it is usable anyway.
    """

    def __init__(self, message, best=None, gap=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.gap = gap
        self.iterations = iterations


class AssumptionViolation(LLPError, ValueError):
    """A group of bags does not admit a valid noise transition matrix.

    ``kind`` is ``"Singular"`` when the proportion matrix cannot be inverted
    and ``"PriorOutsideHull"`` when the clean prior is not strictly inside
    the convex hull of the group's proportions.
    """

    SINGULAR = "Singular"
    PRIOR_OUTSIDE_HULL = "PriorOutsideHull"

    def __init__(self, kind, message, group=None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.group = group


class DataError(LLPError, ValueError):
    """Malformed or insufficient input data."""


class ConfigError(LLPError, ValueError):
    """Invalid configuration values."""
