"""Exception types raised across the package."""


class DscxError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(DscxError, ValueError):
    pass


class GraphNotRecorded(DscxError, RuntimeError):
    """backward() called on a tensor that has no recorded history."""


class InvalidLabel(DscxError, ValueError):
    pass


class CheckpointMismatch(DscxError, ValueError):
    """Checkpoint names, shapes or header do not match the model."""


class NonFiniteLoss(DscxError, FloatingPointError):
    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class EmptyDataset(DscxError, ValueError):
    pass


class MissingKeyframe(DscxError, ValueError):
    pass


class TooFewFrames(DscxError, ValueError):
    pass


class LengthMismatch(DscxError, ValueError):
    pass


class InvalidConfig(DscxError, ValueError):
    pass
