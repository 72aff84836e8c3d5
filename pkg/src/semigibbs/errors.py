"""Exception types raised across the package."""


class SemigibbsError(Exception):
    """Base class for all package errors."""


class ArgumentError(SemigibbsError, ValueError):
    pass


class TruncationError(SemigibbsError):
    """The Fock cutoff is too small for the requested accuracy."""

    def __init__(self, message, suggested_n_max=None):
        super().__init__(message)
        self.suggested_n_max = suggested_n_max


class ConvergenceError(SemigibbsError):
    """An adaptive quadrature did not settle within its level budget."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ClassSViolation(SemigibbsError, ValueError):
    pass


class InvalidDensityError(SemigibbsError, ValueError):
    pass


class DegenerateBasisError(SemigibbsError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class ResourceError(SemigibbsError):
    pass


class ConfigError(SemigibbsError, ValueError):
    pass
