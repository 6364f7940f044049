"""Exception hierarchy shared by every stage of the pipeline."""


class MvladdmError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(MvladdmError, ValueError):
    pass


class NonScalarLoss(MvladdmError, ValueError):
    pass


class NonPositivePrecision(MvladdmError, ValueError):
    pass


class VolumeTooSmall(MvladdmError, ValueError):
    pass


class DegenerateInput(MvladdmError, ValueError):
    pass


class OutOfBoundsStart(MvladdmError, ValueError):
    pass


class ScaleMismatch(MvladdmError, ValueError):
    pass


class InsufficientData(MvladdmError, ValueError):
    pass


class ViewLengthMismatch(MvladdmError, ValueError):
    pass


class DimMismatch(MvladdmError, ValueError):
    pass


class TooManyViews(MvladdmError, ValueError):
    pass


class LabelOutOfRange(MvladdmError, ValueError):
    pass


class EmptyDataset(MvladdmError, ValueError):
    pass


class InconsistentViews(MvladdmError, ValueError):
    pass


class LengthMismatch(MvladdmError, ValueError):
    pass


class DegenerateLabels(MvladdmError, ValueError):
    pass


class InvalidSpec(MvladdmError, ValueError):
    pass


class ConfigError(MvladdmError, ValueError):
    pass


class ParseError(MvladdmError, ValueError):
    """Malformed dataset record; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MalformedBinary(MvladdmError, ValueError):
    pass


class CheckpointMismatch(MvladdmError, ValueError):
    pass


class IoFailure(MvladdmError, OSError):
    pass


class RankDeficientWarning(UserWarning):
    """PCA asked for more components than the data has non-zero directions."""
