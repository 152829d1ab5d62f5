"""Exception hierarchy shared by all modules."""


class SuperradError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SuperradError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(SuperradError, ValueError):
    """Input data or configuration failed validation."""


class NumericalError(SuperradError, ArithmeticError):
    """Propagation produced non-finite or unphysical values."""


class CapabilityError(SuperradError):
    """Request exceeds what an engine is built to handle."""


class FitError(SuperradError, RuntimeError):
    """A fit failed. ``best`` carries the best-so-far result, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
