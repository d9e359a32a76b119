"""Exception hierarchy shared across the package."""


class FedTeachError(Exception):
    pass


class ShapeError(FedTeachError, ValueError):
    """Array or parameter dimensions do not chain."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class DatasetError(FedTeachError, ValueError):
    pass


class InsufficientSamplesError(DatasetError):
    def __init__(self, cls, needed, available):
        super().__init__(
            f"class {cls} needs {needed} samples but only {available} are available"
        )
        self.cls = cls
        self.needed = needed
        self.available = available


class IdxFormatError(DatasetError):
    """Bad magic number or malformed header."""


class IdxTruncatedError(DatasetError):
    pass


class IdxCountMismatchError(DatasetError):
    pass


class PartitionError(FedTeachError, ValueError):
    pass


class DivergenceError(FedTeachError, FloatingPointError):
    """A training loop produced a non-finite loss."""


class CheckpointError(FedTeachError, ValueError):
    pass


class ConfigError(FedTeachError, ValueError):
    pass
