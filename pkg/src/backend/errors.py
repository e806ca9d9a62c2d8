"""
Exception hierarchy for the dial meter toolkit.

Every error raised on purpose by the toolkit derives from ``DialMeterError``,
so the command-line layer can map them onto exit code 1 with a single catch.
"""

from typing import Optional


class DialMeterError(Exception):
    """Base class for all toolkit errors."""

    @property
    def kind(self) -> str:
        """Short machine-readable error name used on the diagnostic stream."""
        return type(self).__name__


class InvalidAngle(DialMeterError, ValueError):
    """Raised when an angle is NaN or infinite."""


class DegenerateSegment(DialMeterError, ValueError):
    """Raised when a segment is defined by two coincident points."""


class UnsupportedDialCount(DialMeterError, ValueError):
    """
    Raised when a counter does not hold exactly 4 or 5 dials.

    The partial digit string read from the surviving dials is kept so that
    callers can still score dial-level metrics on the failed record.
    """

    def __init__(self, count: int, image_id: Optional[str] = None, digits: str = ""):
        self.count = count
        self.image_id = image_id
        self.digits = digits
        where = f"image {image_id} has" if image_id else "got"
        super().__init__(f"{where} {count} dials; only 4 or 5 are supported")


class ConsumptionOverflow(DialMeterError, ValueError):
    """Raised when a consumption value cannot be shown on the given dials."""


class InsufficientDials(DialMeterError, ValueError):
    """Raised when the counter tilt needs more dials than were detected."""


class EmptyCalibrationSet(DialMeterError, ValueError):
    """Raised when threshold calibration receives no samples."""


class EmptyEvaluationSet(DialMeterError, ValueError):
    """Raised when a metric is asked to aggregate nothing."""


class EmptyGroundTruth(DialMeterError, ValueError):
    """Raised when mean AP is requested over scenes without ground-truth boxes."""


class ShapeMismatch(DialMeterError, ValueError):
    """Raised when paired sequences differ in length."""


class ParseError(DialMeterError, ValueError):
    """Raised when a record or value cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class ValidationError(DialMeterError, ValueError):
    """Raised when a value violates a field invariant; ``path`` names the field."""

    def __init__(self, message: str, path: str = "", line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        location = ""
        if line is not None:
            location += f"line {line}: "
        if path:
            location += f"{path}: "
        super().__init__(f"{location}{message}")


class IoError(DialMeterError, OSError):
    """Raised when a file cannot be read or written."""
