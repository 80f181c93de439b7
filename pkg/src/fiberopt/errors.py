"""Exception types shared across the package."""


class FiberError(Exception):
    """Base class for all package errors."""


class InvalidParameter(FiberError, ValueError):
    """A configuration value is outside its admissible range."""


class InvalidOrder(InvalidParameter):
    """RDP order is not an integer >= 2."""


class ConstraintViolation(InvalidParameter):
    """Two-point mixing weight leaves the convex range [0, 1]."""


class DimensionMismatch(FiberError, ValueError):
    """Vector arguments do not share a common dimension."""


class BatchShapeError(DimensionMismatch):
    """Per-example gradient lists are not paired one-to-one."""


class InstabilityError(FiberError, ValueError):
    """State-transition matrix has spectral radius >= 1."""


class ConvergenceFailure(FiberError, RuntimeError):
    """An iterative solve did not converge within its budget."""


class CalibrationFailure(FiberError, RuntimeError):
    """No noise multiplier in the search range meets the target budget."""


class DegenerateVariance(FiberError, ValueError):
    """A variance that must be positive is zero."""
