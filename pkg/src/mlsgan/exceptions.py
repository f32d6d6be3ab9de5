"""Exception types raised across the package."""


class MLSGANError(Exception):
    """Base class for all package errors."""


class DimensionError(MLSGANError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(MLSGANError, ValueError):
    """An operation was applied outside its mathematical domain."""


class ContractError(MLSGANError, ValueError):
    """A precondition of a public operation was violated."""


class NumericError(MLSGANError, FloatingPointError):
    """An operation produced NaN or Inf from finite inputs."""


class TrainingError(MLSGANError, RuntimeError):
    """Training aborted because of a numeric failure."""

    def __init__(self, message, *, epoch=None, batch=None, head=None, parameter=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.head = head
        self.parameter = parameter


class FormatError(MLSGANError, ValueError):
    """A file does not follow the documented layout."""


class ParseError(FormatError):
    """A file could not be parsed; carries record or line context."""


class ConfigError(ContractError):
    """A run configuration is malformed or names an unknown field."""
