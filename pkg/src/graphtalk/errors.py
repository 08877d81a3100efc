"""Exception hierarchy shared across the package."""


class GraphTalkError(Exception):
    """Base class for all errors raised by graphtalk."""


class ShapeError(GraphTalkError):
    """Tensor shapes are incompatible for the requested operation."""


class NumericError(GraphTalkError):
    """A forward operation produced NaN or Inf."""


class InvalidMaskError(GraphTalkError):
    """An attention mask leaves no entry unmasked."""


class ContractError(GraphTalkError):
    """An API precondition was violated (non-scalar loss, missing gradient, ...)."""


class ConfigError(GraphTalkError):
    """A run configuration value is out of its allowed range."""


class DataError(GraphTalkError):
    """A corpus record, KB triple or label is malformed."""


class CheckpointError(GraphTalkError):
    """A checkpoint file is unreadable or incompatible with the model."""
