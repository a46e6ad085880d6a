"""Exception hierarchy shared by all modules."""


class CensoredNBEError(Exception):
    """Base class for package errors."""


class InvalidArgument(CensoredNBEError, ValueError):
    pass


class InvalidData(CensoredNBEError, ValueError):
    pass


class NotPositiveDefinite(CensoredNBEError, ArithmeticError):
    """Cholesky factorization failed even at the jitter cap."""

    def __init__(self, message, jitter):
        super().__init__(message)
        self.jitter = jitter


class NotApplicable(CensoredNBEError, ValueError):
    pass


class SamplerError(CensoredNBEError, RuntimeError):
    pass


class NumericalError(CensoredNBEError, FloatingPointError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class CheckpointError(CensoredNBEError, IOError):
    pass


class TrainingFailed(CensoredNBEError, RuntimeError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class FitFailed(CensoredNBEError, RuntimeError):
    pass
