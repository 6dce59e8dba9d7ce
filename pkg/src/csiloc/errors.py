"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 2 (argparse),
``DataError`` subclasses exit 3, ``NumericError`` subclasses exit 4.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(ToolkitError):
    """Input data violates a documented precondition or format."""


class NumericError(ToolkitError):
    """A numeric procedure cannot proceed (degenerate or non-finite state)."""


class MalformedFrame(DataError):
    """Binary log frame header is inconsistent with the remaining bytes."""


class DimensionMismatch(DataError):
    """Payload length disagrees with the declared antenna/subcarrier packing."""


class ValueOutOfRange(DataError):
    """Value does not fit the signed 8-bit packing domain."""


class UnknownReferencePoint(DataError):
    """rp_id is not part of the reference-point grid."""


class InsufficientSamples(DataError):
    """Fewer capture records than the subsample size requires."""


class TooManyLinks(DataError):
    """More antenna links than color channels available."""


class ResolutionMismatch(DataError):
    """Feature-map resolution differs from what the consumer expects."""


class InsufficientData(DataError):
    """Not enough labeled maps to train or evaluate."""


class TooFewClasses(DataError):
    """Grid has fewer reference points than the positioning rule needs."""


class OutOfRoom(DataError):
    """Requested position lies outside the simulated room."""


class ShapeMismatch(DataError):
    """Tensor shape incompatible with the layer or operation."""


class NoRecordedForward(NumericError):
    """backward() called on a tensor with no recorded computation."""


class DegenerateCalibration(NumericError):
    """Score normalization anchors are too close to define a rescale."""


class NonFiniteLoss(NumericError):
    """Training loss left the finite domain; run aborted."""


class TruncatedRecordWarning(UserWarning):
    """A capture log ended in the middle of its final record."""
