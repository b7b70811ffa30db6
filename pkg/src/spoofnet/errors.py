"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError subclasses exit with 2,
NumericalError with 3.
"""


class SpoofNetError(Exception):
    """Base class for all package errors."""


class DataError(SpoofNetError):
    """Problems with input data (audio, manifests, annotations, scores)."""


class InvalidAudio(DataError):
    """Audio input that cannot be ingested (empty, unsupported format)."""


class SilentAudio(DataError):
    """Audio with no content above the silence threshold."""


class ParseError(DataError):
    """Malformed manifest or config row; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateId(DataError):
    """Manifest contains the same utt_id more than once."""


class InsufficientData(DataError):
    """Not enough entries to perform the requested split."""


class ClassMissing(DataError):
    """An operation requiring both real and fake items got only one class."""


class DegenerateData(DataError):
    """Statistics cannot be fitted (e.g. zero variance, no voiced frames)."""


class AlignmentError(DataError):
    """Model output and ground-truth annotation disagree on frame count."""


class InvalidWeights(DataError):
    """Frame attention weights do not form a probability simplex."""


class ShapeError(SpoofNetError):
    """Tensor operands with incompatible shapes; message names both."""


class NotScalar(SpoofNetError):
    """backward() called on a tensor that is not a scalar."""


class NumericalError(SpoofNetError):
    """Non-finite values encountered during optimization."""
