class MxAffineError(Exception):
    """Base class for every error raised by the project."""

    exit_code = 1


class ConfigurationError(MxAffineError):
    exit_code = 1


class ContainerFormatError(MxAffineError):
    exit_code = 1


class DimensionError(MxAffineError, ValueError):
    exit_code = 1


class NumericalError(MxAffineError):
    exit_code = 2


class SingularMatrixError(NumericalError):
    pass


class NonFiniteError(NumericalError):

    def __init__(self, message, path=None):
        if path is not None:
            message = f'{message} (at {path})'
        super().__init__(message)
        self.path = path


class DivergenceError(NumericalError):

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class VerificationError(MxAffineError):
    exit_code = 3

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)
