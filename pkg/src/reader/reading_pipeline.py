"""
Reading pipeline: from the raw detections of one meter image to a Reading.

Stages, in order: redundant-box suppression, left-to-right ordering, counter
tilt estimation and a single rectification pass, per-dial value extraction,
and carry correction (skipped in detection mode).
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from backend.correction import correct_sequence_detailed
from backend.dial_model import (
    BOUNDARY_EPS,
    alternating_pattern,
    angle_to_value,
    orientation_pattern,
    relabel_digit_from_cw,
    value_to_angle,
    value_to_digit,
)
from backend.errors import DialMeterError, InsufficientDials, UnsupportedDialCount, ValidationError
from backend.geometry import decode_angle, iou, point_line_distance, rotate_points, rotate_unit, segment_angle
from backend.models import (
    BBox,
    CorrectionThresholds,
    DialDetection,
    MeterObservation,
    Orientation,
    Payload,
    PayloadKind,
    PipelineMode,
    Reading,
)
from config import Config

logger = logging.getLogger(__name__)

Observer = Callable[[float], MeterObservation]

COLLINEARITY_WARNING = "CollinearityWarning"


@dataclass(frozen=True)
class PipelineOptions:
    """Tunables of the reading pipeline."""
    iou_threshold: float = Config.NMS_IOU_THRESHOLD
    tilt_threshold: float = Config.TILT_THRESHOLD_DEG
    pair_iou: float = Config.HYBRID_PAIR_IOU
    collinearity_factor: float = Config.COLLINEARITY_FACTOR
    # Class scores of CCW dials were trained on mirrored labels.
    cw_label_space: bool = False
    rectify: bool = True

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ValidationError(f"must lie in (0, 1], got {self.iou_threshold}", path="iou_threshold")
        if not 0 < self.pair_iou <= 1:
            raise ValidationError(f"must lie in (0, 1], got {self.pair_iou}", path="pair_iou")
        if self.tilt_threshold < 0:
            raise ValidationError(f"must be non-negative, got {self.tilt_threshold}", path="tilt_threshold")


@dataclass
class ReadingOutcome:
    """Result of reading one observation in a batch: a Reading or the error that stopped it."""
    image_id: str
    reading: Optional[Reading] = None
    error: Optional[DialMeterError] = None

    @property
    def ok(self) -> bool:
        return self.reading is not None

    def to_dict(self) -> Dict:
        """Convert to a predictions-file record."""
        if self.reading is not None:
            return self.reading.to_dict()
        return {
            'image_id': self.image_id,
            'error': self.error.kind,
            'message': str(self.error),
            'count': getattr(self.error, 'count', None),
            'digits': getattr(self.error, 'digits', ""),
        }


def nms(dials: Sequence[DialDetection], iou_threshold: float = Config.NMS_IOU_THRESHOLD) -> List[DialDetection]:
    """
    Greedy non-maximum suppression.

    Boxes are visited by descending confidence, ties by input position; a box
    is dropped when it overlaps an already kept box with IoU at or above the
    threshold. Survivors are returned in input order.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"IoU threshold must lie in (0, 1], got {iou_threshold}")
    order = sorted(range(len(dials)), key=lambda i: (-dials[i].confidence, i))
    kept: List[int] = []
    for i in order:
        if all(iou(dials[i].box, dials[j].box) < iou_threshold for j in kept):
            kept.append(i)
    return [dials[i] for i in sorted(kept)]


def order_dials(dials: Sequence[DialDetection]) -> List[DialDetection]:
    """Sort dials left to right by box center; equal centers keep their input order."""
    return sorted(dials, key=lambda d: d.box.cx)


def counter_tilt(ordered_dials: Sequence[DialDetection]) -> float:
    """Tilt of the line through the first and last dial centers, in degrees."""
    if len(ordered_dials) < 2:
        raise InsufficientDials(f"counter tilt needs at least 2 dials, got {len(ordered_dials)}")
    return segment_angle(ordered_dials[0].box.center, ordered_dials[-1].box.center)


def needs_rotation(theta: float, threshold: float = Config.TILT_THRESHOLD_DEG) -> bool:
    return abs(theta) > threshold


def collinearity_warning(ordered_dials: Sequence[DialDetection], factor: float = Config.COLLINEARITY_FACTOR) -> Optional[str]:
    """Warning text when a dial center strays from the first-last line, else ``None``."""
    if len(ordered_dials) < 3:
        return None
    first, last = ordered_dials[0].box.center, ordered_dials[-1].box.center
    if first == last:
        return None
    limit = factor * float(np.median([d.box.h for d in ordered_dials]))
    for position, dial in enumerate(ordered_dials[1:-1], start=2):
        distance = point_line_distance(dial.box.center, first, last)
        if distance > limit:
            return f"{COLLINEARITY_WARNING}: dial {position} lies {distance:.1f}px off the counter line (limit {limit:.1f}px)"
    return None


def _rank_orientations(dials: Sequence[DialDetection]) -> List[Orientation]:
    """Orientation of each dial in input order, from its left-to-right rank."""
    pattern = alternating_pattern(len(dials))
    ranks = sorted(range(len(dials)), key=lambda i: dials[i].box.cx)
    orientations: List[Optional[Orientation]] = [None] * len(dials)
    for rank, index in enumerate(ranks):
        orientations[index] = pattern[rank]
    return orientations


def _shift_payload(payload: Optional[Payload], phi: float, orientation: Orientation) -> Optional[Payload]:
    """Shift the apparent clock angle carried by a payload; class scores carry none."""
    if payload is None or payload.kind is PayloadKind.CLASS_SCORES:
        return payload
    if payload.kind is PayloadKind.SINCOS:
        return Payload.sincos(*rotate_unit(payload.data[0], payload.data[1], phi))
    angle = value_to_angle(payload.data[0], orientation) + phi
    return Payload.value(angle_to_value(angle, orientation))


def rectify(
    obs: MeterObservation,
    theta: float,
    reobserve: Optional[Observer] = None,
    orientations: Optional[Sequence[Orientation]] = None,
) -> MeterObservation:
    """
    Undo a counter tilt of ``theta`` degrees.

    Args:
        obs: Observation to rectify
        theta: Estimated counter tilt
        reobserve: Callback that re-photographs the meter rotated by the given
            angle; when supplied its observation is returned as is
        orientations: Orientation of each dial in ``obs.dials`` order, used to
            shift value payloads; derived from the left-to-right rank if omitted

    Returns:
        The rectified observation
    """
    if reobserve is not None:
        logger.debug(f"Re-observing {obs.image_id} rotated by {-theta:.3f} degrees")
        return reobserve(-theta)
    if theta == 0 or not obs.dials:
        return obs
    if orientations is None:
        orientations = _rank_orientations(obs.dials)
    centers = [d.box.center for d in obs.dials]
    centroid = tuple(np.mean(np.asarray(centers, dtype=float), axis=0))
    rotated = rotate_points(centers, centroid, -theta)

    dials = []
    for dial, (x, y), orientation in zip(obs.dials, rotated, orientations):
        dials.append(replace(
            dial,
            box=BBox(float(x), float(y), dial.box.w, dial.box.h),
            payload=_shift_payload(dial.payload, -theta, orientation),
            aux=_shift_payload(dial.aux, -theta, orientation),
        ))
    logger.debug(f"Rectified {obs.image_id} by {-theta:.3f} degrees about {centroid}")
    return obs.with_dials(dials)


def argmax_digit(payload: Payload) -> int:
    """Most likely digit of a class-score payload."""
    # np.argmax returns the first maximum, so ties go to the smaller digit.
    return int(np.argmax(np.asarray(payload.data)))


def _continuous_value(payload: Payload, orientation: Orientation) -> float:
    if payload.kind is PayloadKind.VALUE:
        value = payload.data[0]
    else:
        value = angle_to_value(decode_angle(payload.data[0], payload.data[1]), orientation)
    # A pointer a hair below 10 sits on 0; its left neighbour must see 0, not 9.99.
    return 0.0 if value >= 10.0 - BOUNDARY_EPS else value


def dial_value(det: DialDetection, orientation: Orientation, cw_label_space: bool = False) -> Tuple[float, bool]:
    """
    Value shown by one dial.

    Args:
        det: The detection
        orientation: The dial's orientation
        cw_label_space: Whether class scores of CCW dials use mirrored labels

    Returns:
        Tuple of (dial value, whether it came from a class prediction)
    """
    if det.payload.kind is PayloadKind.CLASS_SCORES:
        digit = argmax_digit(det.payload)
        if cw_label_space:
            digit = relabel_digit_from_cw(digit, orientation)
        return float(digit), True
    return _continuous_value(det.payload, orientation), False


def pair_auxiliary(
    primary: Sequence[DialDetection],
    secondary: Sequence[DialDetection],
    min_iou: float = Config.HYBRID_PAIR_IOU,
) -> List[DialDetection]:
    """
    Attach regression outputs to class detections of the same dial.

    Pairs are formed greedily by descending IoU (ties by position), each box
    used at most once. Detections that already carry an auxiliary payload are
    left alone.
    """
    candidates = []
    for i, p in enumerate(primary):
        if p.aux is not None:
            continue
        for j, s in enumerate(secondary):
            overlap = iou(p.box, s.box)
            if overlap >= min_iou:
                candidates.append((-overlap, i, j))
    candidates.sort()
    paired: Dict[int, Payload] = {}
    used = set()
    for _, i, j in candidates:
        if i in paired or j in used:
            continue
        paired[i] = secondary[j].payload
        used.add(j)
    return [replace(p, aux=paired[i]) if i in paired else p for i, p in enumerate(primary)]


class ReadingPipeline:
    """Assembles meter readings in one of the three pipeline modes."""

    def __init__(
        self,
        mode: PipelineMode = PipelineMode.REGRESSION,
        thresholds: Optional[CorrectionThresholds] = None,
        options: Optional[PipelineOptions] = None,
    ):
        """
        Initialize the pipeline.

        Args:
            mode: How digits are produced from the detections
            thresholds: Carry correction thresholds (defaults when omitted)
            options: Pipeline tunables
        """
        self.mode = mode
        self.thresholds = thresholds or CorrectionThresholds()
        self.options = options or PipelineOptions()

    def _select(self, dials: Sequence[DialDetection]) -> List[DialDetection]:
        """Suppress duplicates and keep the detections that define the dials for this mode."""
        classes = [d for d in dials if d.payload.kind is PayloadKind.CLASS_SCORES]
        if self.mode is PipelineMode.REGRESSION:
            primary = [d for d in dials if d.continuous_payload is not None] or list(dials)
            return nms(primary, self.options.iou_threshold)
        if not classes:
            return nms(dials, self.options.iou_threshold)
        primary = nms(classes, self.options.iou_threshold)
        if self.mode is PipelineMode.HYBRID:
            regressions = nms([d for d in dials if d.payload.is_continuous], self.options.iou_threshold)
            primary = pair_auxiliary(primary, regressions, self.options.pair_iou)
        return primary

    def _digits_of(self, dials: Sequence[DialDetection]) -> str:
        pattern = alternating_pattern(len(dials))
        return ''.join(str(self._base_digit(d, o)) for d, o in zip(dials, pattern))

    def _base_digit(self, det: DialDetection, orientation: Orientation) -> int:
        if self.mode is PipelineMode.REGRESSION and det.continuous_payload is not None:
            return value_to_digit(_continuous_value(det.continuous_payload, orientation))
        value, discrete = dial_value(det, orientation, self.options.cw_label_space)
        return int(value) if discrete else value_to_digit(value)

    def _prepare(self, obs: MeterObservation) -> List[DialDetection]:
        ordered = order_dials(self._select(obs.dials))
        if len(ordered) not in Config.SUPPORTED_DIAL_COUNTS:
            raise UnsupportedDialCount(len(ordered), image_id=obs.image_id, digits=self._digits_of(ordered))
        return ordered

    def read(self, obs: MeterObservation, reobserve: Optional[Observer] = None) -> Reading:
        """
        Assemble the reading of one observation.

        Args:
            obs: Detections of one meter image
            reobserve: Optional callback re-photographing the meter rotated by
                a given angle, used instead of analytic rectification

        Returns:
            Reading
        """
        ordered = self._prepare(obs)
        tilt = counter_tilt(ordered)
        warnings = list(obs.warnings)
        tilt_applied = 0.0

        if self.options.rectify and needs_rotation(tilt, self.options.tilt_threshold):
            if reobserve is not None:
                rectified = rectify(obs, tilt, reobserve=reobserve)
                ordered = self._prepare(rectified)
            else:
                rectified = rectify(obs.with_dials(ordered), tilt, orientations=orientation_pattern(len(ordered)))
                ordered = order_dials(rectified.dials)
            tilt_applied = -tilt

        warning = collinearity_warning(ordered, self.options.collinearity_factor)
        if warning:
            logger.warning(f"{obs.image_id}: {warning}")
            warnings.append(warning)

        orientations = orientation_pattern(len(ordered))
        base_digits = [self._base_digit(d, o) for d, o in zip(ordered, orientations)]
        values = [
            _continuous_value(d.continuous_payload, o) if d.continuous_payload is not None else None
            for d, o in zip(ordered, orientations)
        ]

        if self.mode is PipelineMode.DETECTION:
            digits = base_digits
            per_dial = [float(b) if v is None else v for b, v in zip(base_digits, values)]
            fired = 0
        else:
            result = correct_sequence_detailed(values, self.thresholds, base_digits=base_digits)
            digits, per_dial, fired = result.digits, result.values, result.fired

        text = ''.join(str(d) for d in digits)
        reading = Reading(
            image_id=obs.image_id,
            digits=text,
            integer_value=int(text),
            per_dial=per_dial,
            tilt=tilt,
            tilt_applied=tilt_applied,
            corrections_applied=fired,
            raw_digits=''.join(str(d) for d in base_digits),
            raw_values=values,
            warnings=warnings,
        )
        logger.debug(f"{obs.image_id}: {reading.raw_digits} -> {text} ({fired} corrections, tilt {tilt:.2f})")
        return reading

    def read_batch(
        self,
        observations: Sequence[MeterObservation],
        reobservers: Optional[Sequence[Optional[Observer]]] = None,
    ) -> List[ReadingOutcome]:
        """Read every observation; a failing record becomes an error outcome instead of raising."""
        if reobservers is not None and len(reobservers) != len(observations):
            raise ValueError("one observer per observation is required")
        outcomes = []
        for index, obs in enumerate(observations):
            reobserve = reobservers[index] if reobservers is not None else None
            try:
                outcomes.append(ReadingOutcome(obs.image_id, reading=self.read(obs, reobserve)))
            except DialMeterError as e:
                logger.warning(f"Could not read {obs.image_id}: {e}")
                outcomes.append(ReadingOutcome(obs.image_id, error=e))
        failed = sum(not o.ok for o in outcomes)
        logger.info(f"Read {len(outcomes) - failed}/{len(outcomes)} meters in {self.mode.value} mode")
        return outcomes


def assemble_reading(
    obs: MeterObservation,
    mode: PipelineMode,
    thresholds: Optional[CorrectionThresholds] = None,
    reobserve: Optional[Observer] = None,
    options: Optional[PipelineOptions] = None,
) -> Reading:
    """Assemble one reading; see ``ReadingPipeline.read``."""
    return ReadingPipeline(mode, thresholds, options).read(obs, reobserve)


def read_batch(
    observations: Sequence[MeterObservation],
    mode: PipelineMode,
    thresholds: Optional[CorrectionThresholds] = None,
    options: Optional[PipelineOptions] = None,
) -> List[ReadingOutcome]:
    return ReadingPipeline(mode, thresholds, options).read_batch(observations)
