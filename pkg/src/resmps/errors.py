"""Exception hierarchy shared by every module."""


class ResMPSError(Exception):
    """Base class for all library errors."""


class ShapeError(ResMPSError, ValueError):
    pass


class DomainError(ResMPSError, ValueError):
    pass


class FormatError(ResMPSError, ValueError):
    """Malformed IDX or checkpoint bytes (bad magic, unknown codes)."""


class ConsistencyError(ResMPSError, ValueError):
    """Two inputs that must agree (e.g. image and label counts) do not."""


class ConfigError(ResMPSError, ValueError):
    pass


class DivergenceError(ResMPSError, ArithmeticError):
    """Raised when a loss or parameter becomes non-finite during training."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
