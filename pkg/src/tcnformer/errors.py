"""Exception types shared across the package.

Everything raised on purpose derives from TcnformerError so the service
layer can map domain failures to one-line HTTP 400 diagnostics while real
bugs still surface as 500s.
"""


class TcnformerError(Exception):
    """Base class for all deliberate failures."""


class ShapeError(TcnformerError):
    """Operands have incompatible or unexpected dimensions."""


class ContractError(TcnformerError):
    """A documented precondition was violated by the caller."""


class InvalidMaskError(TcnformerError):
    """A softmax row has no allowed entries."""


class CheckpointError(TcnformerError):
    """Checkpoint file is structurally invalid or does not match the model."""


class IngestionError(TcnformerError):
    """A data file could not be parsed; message carries the 1-based row."""


class FetchError(TcnformerError):
    """Download failed after all retry attempts."""


class DataRangeError(TcnformerError):
    """A series is too short or does not cover the requested span."""


class DegenerateScalerError(TcnformerError):
    """Min equals max; min-max scaling is undefined."""


class ConfigError(TcnformerError):
    """Bad configuration key or value; message names the key (and line)."""


class DivergenceError(TcnformerError):
    """Training produced a non-finite loss or gradient."""


class UndefinedImprovementError(TcnformerError):
    """Relative improvement is undefined because baseline + model is zero."""
