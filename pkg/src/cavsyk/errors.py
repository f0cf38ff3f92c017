"""Exception types shared across the package."""


class ResolutionError(ValueError):
    """Grid too coarse or too small to resolve the requested object."""


class CapacityError(ValueError):
    """Requested size exceeds the dense-solver guard."""


class DegenerateInputError(ValueError):
    """Input is degenerate (zero variance, zero mean intensity, ...)."""


class EigensolverError(RuntimeError):
    """Dense eigensolve failed to converge."""


class ExtractionError(RuntimeError):
    """A feature (crossing time, ramp time, ...) could not be located."""


class FitError(RuntimeError):
    """Nonlinear least-squares fit failed to converge."""
