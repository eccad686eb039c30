"""Exception hierarchy shared by all modules."""


class QarSpecError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(QarSpecError, ValueError):
    """An argument is out of its documented range."""


class LoadError(QarSpecError, ValueError):
    """Input table could not be turned into a valid panel or series."""


class VarianceError(LoadError):
    """A series has zero sample variance and cannot be standardized."""


class AlignmentError(QarSpecError, ValueError):
    """Two inputs that must share a period index do not."""


class SingularDesignError(QarSpecError, ValueError):
    """Design matrix is rank deficient."""


class NumericError(QarSpecError, ArithmeticError):
    """A numerical routine failed (non-convergence, overflow, bracket failure)."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
