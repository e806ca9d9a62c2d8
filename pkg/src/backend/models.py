import math
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from backend.errors import ValidationError

SCORE_SUM_TOLERANCE = 1e-6


class Orientation(Enum):
    """Direction in which a dial's scale increases."""
    CW = "cw"
    CCW = "ccw"


class PayloadKind(Enum):
    """What a detector reported for one dial."""
    CLASS_SCORES = "class_scores"
    VALUE = "value"
    SINCOS = "sincos"


class PipelineMode(Enum):
    """How the final digits are produced from the detections."""
    DETECTION = "detection"    # digits from class scores, no correction
    REGRESSION = "regression"  # digits from continuous values plus correction
    HYBRID = "hybrid"          # digits from class scores, correction driven by continuous values


@dataclass(frozen=True)
class UnitVec:
    """A (sine, cosine) pair as produced by the angle encoder."""
    s: float
    c: float

    def norm(self) -> float:
        return math.hypot(self.s, self.c)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box given by its center and extent, in pixels."""
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not self.w > 0:
            raise ValidationError(f"width must be positive, got {self.w}", path="w")
        if not self.h > 0:
            raise ValidationError(f"height must be positive, got {self.h}", path="h")

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2

    @property
    def center(self) -> Tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> 'BBox':
        return cls(cx=(x1 + x2) / 2, cy=(y1 + y2) / 2, w=x2 - x1, h=y2 - y1)

    def to_list(self) -> List[float]:
        return [self.cx, self.cy, self.w, self.h]


@dataclass(frozen=True)
class Payload:
    """
    Per-dial detector output.

    Exactly one variant is held: ten class scores, a continuous dial value,
    or a raw (sine, cosine) pair. Use the ``class_scores``, ``value`` and
    ``sincos`` constructors rather than building instances by hand.
    """
    kind: PayloadKind
    data: Tuple[float, ...]

    def __post_init__(self):
        if any(not math.isfinite(x) for x in self.data):
            raise ValidationError("payload data must be finite", path="data")
        if self.kind is PayloadKind.CLASS_SCORES:
            if len(self.data) != 10:
                raise ValidationError(f"expected 10 class scores, got {len(self.data)}", path="data")
            if min(self.data) < 0:
                raise ValidationError("class scores must be non-negative", path="data")
            if abs(math.fsum(self.data) - 1.0) > SCORE_SUM_TOLERANCE:
                raise ValidationError("class scores must sum to 1", path="data")
        elif self.kind is PayloadKind.VALUE:
            if len(self.data) != 1:
                raise ValidationError("value payload holds a single number", path="data")
            if not 0 <= self.data[0] < 10:
                raise ValidationError(f"dial value must lie in [0, 10), got {self.data[0]}", path="data")
        elif len(self.data) != 2:
            raise ValidationError("sincos payload holds exactly two numbers", path="data")

    @classmethod
    def class_scores(cls, scores: Sequence[float]) -> 'Payload':
        return cls(PayloadKind.CLASS_SCORES, tuple(float(x) for x in scores))

    @classmethod
    def value(cls, v: float) -> 'Payload':
        return cls(PayloadKind.VALUE, (float(v),))

    @classmethod
    def sincos(cls, s: float, c: float) -> 'Payload':
        return cls(PayloadKind.SINCOS, (float(s), float(c)))

    @property
    def is_continuous(self) -> bool:
        return self.kind is not PayloadKind.CLASS_SCORES

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the wire form used in detection files."""
        if self.kind is PayloadKind.VALUE:
            data: Any = self.data[0]
        else:
            data = list(self.data)
        return {'kind': self.kind.value, 'data': data}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Payload':
        kind = PayloadKind(data['kind'])
        raw = data['data']
        values = (raw,) if isinstance(raw, (int, float)) else tuple(raw)
        return cls(kind, tuple(float(x) for x in values))


@dataclass(frozen=True)
class DialDetection:
    """One detected dial. ``aux`` optionally pairs a regression output with a classification box."""
    box: BBox
    payload: Payload
    confidence: float
    aux: Optional[Payload] = None

    def __post_init__(self):
        if not 0 <= self.confidence <= 1:
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence}", path="confidence")

    @property
    def continuous_payload(self) -> Optional[Payload]:
        """The regression output for this dial, if it has one."""
        if self.payload.is_continuous:
            return self.payload
        if self.aux is not None and self.aux.is_continuous:
            return self.aux
        return None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'bbox': self.box.to_list(),
            'payload': self.payload.to_dict(),
            'confidence': self.confidence,
        }
        if self.aux is not None:
            data['aux_payload'] = self.aux.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DialDetection':
        aux = data.get('aux_payload')
        return cls(
            box=BBox(*data['bbox']),
            payload=Payload.from_dict(data['payload']),
            confidence=float(data['confidence']),
            aux=Payload.from_dict(aux) if aux else None,
        )


@dataclass
class MeterObservation:
    """All detections for one meter image."""
    image_id: str
    width: float
    height: float
    dials: List[DialDetection]
    warnings: List[str] = field(default_factory=list)

    def with_dials(self, dials: Sequence[DialDetection]) -> 'MeterObservation':
        return replace(self, dials=list(dials), warnings=list(self.warnings))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a detections-file record."""
        return {
            'image_id': self.image_id,
            'width': self.width,
            'height': self.height,
            'dials': [d.to_dict() for d in self.dials],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MeterObservation':
        return cls(
            image_id=data['image_id'],
            width=data['width'],
            height=data['height'],
            dials=[DialDetection.from_dict(d) for d in data['dials']],
        )


@dataclass
class GroundTruth:
    """Annotated reading of one meter image, optionally with per-dial boxes and values."""
    image_id: str
    reading: str
    boxes: List[BBox] = field(default_factory=list)
    dial_values: List[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.reading or not self.reading.isdigit():
            raise ValidationError(f"reading must be a non-empty digit string, got {self.reading!r}", path="reading")
        if len(self.boxes) != len(self.dial_values):
            raise ValidationError("every dial needs both a box and a value", path="dials")
        for index, value in enumerate(self.dial_values):
            if not 0 <= value < 10:
                raise ValidationError(f"dial value must lie in [0, 10), got {value}", path=f"dials[{index}].value")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a ground-truth-file record."""
        return {
            'image_id': self.image_id,
            'reading': self.reading,
            'dials': [{'bbox': box.to_list(), 'value': value} for box, value in zip(self.boxes, self.dial_values)],
        }


@dataclass
class Reading:
    """Assembled meter reading with the per-dial values that produced it."""
    image_id: str
    digits: str
    integer_value: int
    per_dial: List[float]
    tilt: float = 0.0
    tilt_applied: float = 0.0
    corrections_applied: int = 0
    raw_digits: str = ""
    raw_values: List[Optional[float]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.digits) != len(self.per_dial):
            raise ValidationError("digits and per-dial values differ in length", path="per_dial")
        if self.digits and int(self.digits) != self.integer_value:
            raise ValidationError("integer value does not match the digits", path="integer_value")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a predictions-file record."""
        return {
            'image_id': self.image_id,
            'reading': self.digits,
            'integer_value': self.integer_value,
            'per_dial': self.per_dial,
            'raw_digits': self.raw_digits,
            'tilt': self.tilt,
            'tilt_applied': self.tilt_applied,
            'corrections_applied': self.corrections_applied,
            'warnings': self.warnings,
        }


@dataclass
class CorrectionThresholds:
    """
    The two threshold pairs of the carry correction.

    ``carry_up_*`` bumps a dial one digit up when its fractional part is high
    while the dial to its right already wrapped to a low value;
    ``carry_down_*`` is the mirror case.
    """
    carry_up_cur_frac_min: float = 0.75
    carry_up_next_val_max: float = 2.5
    carry_down_cur_frac_max: float = 0.25
    carry_down_next_val_min: float = 7.5
    carry_up_enabled: bool = True
    carry_down_enabled: bool = True

    def __post_init__(self):
        checks = (
            ('carry_up_cur_frac_min', self.carry_up_cur_frac_min, 0.5, 1.0),
            ('carry_up_next_val_max', self.carry_up_next_val_max, 0.0, 5.0),
            ('carry_down_cur_frac_max', self.carry_down_cur_frac_max, 0.0, 0.5),
            ('carry_down_next_val_min', self.carry_down_next_val_min, 5.0, 10.0),
        )
        for name, value, low, high in checks:
            if not low < value < high:
                raise ValidationError(f"must lie in ({low}, {high}), got {value}", path=name)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (
            self.carry_up_cur_frac_min,
            self.carry_up_next_val_max,
            self.carry_down_cur_frac_max,
            self.carry_down_next_val_min,
        )

    @classmethod
    def disabled(cls) -> 'CorrectionThresholds':
        return cls(carry_up_enabled=False, carry_down_enabled=False)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CorrectionThresholds':
        return cls(**data)


@dataclass
class CalibrationGrid:
    """Candidate values for each of the four thresholds."""
    carry_up_cur_frac_min: List[float]
    carry_up_next_val_max: List[float]
    carry_down_cur_frac_max: List[float]
    carry_down_next_val_min: List[float]

    def __post_init__(self):
        for name in self.axis_names():
            values = sorted(set(float(v) for v in getattr(self, name)))
            if not values:
                raise ValidationError("candidate list must not be empty", path=name)
            setattr(self, name, values)
        # Every grid point must be a valid threshold set.
        CorrectionThresholds(
            self.carry_up_cur_frac_min[0], self.carry_up_next_val_max[0],
            self.carry_down_cur_frac_max[0], self.carry_down_next_val_min[0],
        )
        CorrectionThresholds(
            self.carry_up_cur_frac_min[-1], self.carry_up_next_val_max[-1],
            self.carry_down_cur_frac_max[-1], self.carry_down_next_val_min[-1],
        )

    @staticmethod
    def axis_names() -> Tuple[str, str, str, str]:
        return ('carry_up_cur_frac_min', 'carry_up_next_val_max',
                'carry_down_cur_frac_max', 'carry_down_next_val_min')

    def axes(self) -> List[List[float]]:
        return [getattr(self, name) for name in self.axis_names()]

    def size(self) -> int:
        return math.prod(len(axis) for axis in self.axes())

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CalibrationGrid':
        return cls(**data)
