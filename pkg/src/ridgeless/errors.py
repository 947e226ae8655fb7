"""Exception hierarchy shared by all modules."""


class RidgelessError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(RidgelessError, ValueError):
    """Input has the wrong shape, domain, or content."""


class ConfigError(InvalidInputError):
    """A run configuration failed validation."""


class DataError(InvalidInputError):
    """A dataset could not be loaded or does not fit the requested protocol."""


class UndefinedMetricError(RidgelessError, ArithmeticError):
    """A metric's denominator vanished."""


class NumericalError(RidgelessError, ArithmeticError):
    """A numerical routine failed (singular system, non-convergence).

    ``iterate`` carries the last iterate when the failure came from an
    iterative solver.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate
