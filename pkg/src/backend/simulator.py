"""
Synthetic multi-dial meters with exact ground truth.

Observations are symbolic: dial boxes plus detector payloads, no pixels. A
meter photographed at a tilt shows every pointer's clock angle shifted by the
tilt, and its dial centers rotated about the counter center; the simulator
reproduces exactly that, so tilt rectification can be checked end to end.

All randomness of one sample comes from a single ``numpy`` generator seeded
from (seed, sample index). Per dial the draws are, in order: angle jitter,
flip, drop, duplicate, duplicate angle jitter, duplicate x offset, duplicate
y offset. Every draw is always taken, so outcomes never shift the stream.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from backend.dial_model import (
    BOUNDARY_EPS,
    angle_to_value,
    check_dial_count,
    decompose_consumption,
    orientation_pattern,
    true_reading,
    value_to_angle,
    value_to_digit,
)
from backend.errors import ConsumptionOverflow, ValidationError
from backend.geometry import encode_angle, normalize_angle, rotate_points
from backend.models import BBox, DialDetection, GroundTruth, MeterObservation, Payload, PayloadKind
from config import Config

logger = logging.getLogger(__name__)

Observer = Callable[[float], MeterObservation]


@dataclass(frozen=True)
class MeterSpec:
    """Layout and register position of one synthetic meter."""
    k: int
    consumption: float
    dial_pitch: float = Config.DIAL_PITCH_PX
    dial_box: float = Config.DIAL_BOX_PX
    tilt: float = 0.0
    payload_kind: PayloadKind = PayloadKind.SINCOS
    aux_kind: Optional[PayloadKind] = None
    counter_center: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        check_dial_count(self.k)
        if not math.isfinite(self.consumption) or not 0 <= self.consumption < 10 ** self.k:
            raise ConsumptionOverflow(f"consumption {self.consumption} does not fit on {self.k} dials")
        if not self.dial_box > 0:
            raise ValidationError("must be positive", path="dial_box")
        if not self.dial_pitch >= self.dial_box:
            raise ValidationError("must be at least the dial box size", path="dial_pitch")
        if not -Config.MAX_TILT_DEG <= self.tilt <= Config.MAX_TILT_DEG:
            raise ValidationError(f"must lie in [-{Config.MAX_TILT_DEG}, {Config.MAX_TILT_DEG}]", path="tilt")
        if self.aux_kind is PayloadKind.CLASS_SCORES:
            raise ValidationError("auxiliary payload must be a regression output", path="aux_kind")
        if self.counter_center is not None:
            cx, cy = self.counter_center
            if cx < self.half_extent() or cy < self.half_extent():
                raise ValidationError("counter does not fit on the canvas", path="counter_center")

    def half_extent(self) -> float:
        """Largest distance from the counter center to a box edge along either axis, at any tilt."""
        return (self.k - 1) * self.dial_pitch / 2 + self.dial_box / 2

    def canvas(self) -> Tuple[float, float]:
        """Image width and height implied by the layout."""
        center = self.center()
        reach = self.half_extent() + Config.CANVAS_MARGIN_PX
        return (float(math.ceil(center[0] + reach)), float(math.ceil(center[1] + reach)))

    def center(self) -> Tuple[float, float]:
        if self.counter_center is not None:
            return self.counter_center
        reach = self.half_extent() + Config.CANVAS_MARGIN_PX
        return (reach, reach)


@dataclass(frozen=True)
class NoiseModel:
    """Fault injection settings; all-zero means a perfect detector."""
    angle_sigma: float = 0.0
    flip_prob: float = 0.0
    drop_prob: float = 0.0
    dup_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.angle_sigma < 0:
            raise ValidationError("must be non-negative", path="angle_sigma")
        for name in ('flip_prob', 'drop_prob', 'dup_prob'):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError("must lie in [0, 1]", path=name)
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("must be an unsigned 64-bit integer", path="seed")


@dataclass
class SyntheticSample:
    """A rendered observation with the ground truth that produced it."""
    observation: MeterObservation
    gt_reading: str
    gt_values: List[float]
    spec: MeterSpec
    noise: NoiseModel = field(default_factory=NoiseModel)
    sample_index: int = 0

    def observer(self) -> Observer:
        """Callback that re-photographs this meter after an extra rotation."""
        return lambda rotation: observe(self, self.spec.tilt + rotation)

    def ground_truth(self) -> GroundTruth:
        """Annotation of this sample, with the true box and value of every dial."""
        return GroundTruth(
            image_id=self.observation.image_id,
            reading=self.gt_reading,
            boxes=_dial_boxes(self.spec, self.spec.tilt),
            dial_values=list(self.gt_values),
        )


@dataclass(frozen=True)
class BatchConfig:
    """Settings for a batch of random meters."""
    count: int
    dials: str = "mixed"  # "4", "5" or "mixed"
    tilt_max: float = 0.0
    boundary_weight: float = 0.0
    payload_kind: PayloadKind = PayloadKind.SINCOS
    aux_kind: Optional[PayloadKind] = None
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if self.count < 0:
            raise ValidationError("must be non-negative", path="count")
        if self.dials not in ("4", "5", "mixed"):
            raise ValidationError(f"expected 4, 5 or mixed, got {self.dials!r}", path="dials")
        if not 0 <= self.tilt_max <= Config.MAX_TILT_DEG:
            raise ValidationError(f"must lie in [0, {Config.MAX_TILT_DEG}]", path="tilt_max")
        if not 0 <= self.boundary_weight <= 1:
            raise ValidationError("must lie in [0, 1]", path="boundary_weight")


def _near_boundary(x: float) -> bool:
    return abs(x - round(x)) < BOUNDARY_EPS


def sample_consumption(rng: np.random.Generator, k: int, boundary_weight: float) -> float:
    """
    Draw a register position.

    The integer part is uniform. The fractional part is, with probability
    ``boundary_weight``, a normal around 0 (sigma 0.05) truncated to
    (-0.5, 0.5) and folded into [0, 1); otherwise uniform. Positions that put
    any dial within the guard band of a digit boundary are redrawn.
    """
    check_dial_count(k)
    if not 0 <= boundary_weight <= 1:
        raise ValueError(f"boundary weight must lie in [0, 1], got {boundary_weight}")
    sigma = Config.BOUNDARY_SIGMA
    bound = 0.5 / sigma
    while True:
        integer = int(rng.integers(0, 10 ** k))
        if rng.random() < boundary_weight:
            frac = float(truncnorm.rvs(-bound, bound, loc=0.0, scale=sigma, random_state=rng)) % 1.0
        else:
            frac = float(rng.random())
        consumption = integer + frac
        if consumption >= 10 ** k:
            continue
        if not any(_near_boundary(v) for v in decompose_consumption(consumption, k)):
            return consumption


def _render_payload(kind: PayloadKind, apparent: float, orientation) -> Payload:
    if kind is PayloadKind.SINCOS:
        vec = encode_angle(apparent)
        return Payload.sincos(vec.s, vec.c)
    value = angle_to_value(apparent, orientation)
    if kind is PayloadKind.VALUE:
        return Payload.value(value)
    soft = Config.SCORE_SOFTENING
    scores = np.full(10, soft / 10)
    scores[value_to_digit(value)] += 1 - soft
    return Payload.class_scores(scores)


def _dial_centers(spec: MeterSpec, tilt: float) -> np.ndarray:
    cx, cy = spec.center()
    offsets = (np.arange(spec.k) - (spec.k - 1) / 2) * spec.dial_pitch
    flat = np.stack([cx + offsets, np.full(spec.k, cy)], axis=1)
    return rotate_points(flat, (cx, cy), tilt)


def _dial_boxes(spec: MeterSpec, tilt: float) -> List[BBox]:
    return [BBox(float(x), float(y), spec.dial_box, spec.dial_box) for x, y in _dial_centers(spec, tilt)]


def _sample_rng(noise: NoiseModel, sample_index: int) -> np.random.Generator:
    return np.random.default_rng([noise.seed, sample_index, 1])


def _render(spec: MeterSpec, noise: NoiseModel, sample_index: int, tilt: float) -> SyntheticSample:
    rng = _sample_rng(noise, sample_index)
    values = decompose_consumption(spec.consumption, spec.k)
    orientations = orientation_pattern(spec.k)
    boxes = _dial_boxes(spec, tilt)

    def detection(box: BBox, angle: float, orientation, confidence: float) -> DialDetection:
        apparent = normalize_angle(angle + tilt)
        aux = _render_payload(spec.aux_kind, apparent, orientation) if spec.aux_kind else None
        return DialDetection(box, _render_payload(spec.payload_kind, apparent, orientation), confidence, aux)

    dials = []
    for value, orientation, box in zip(values, orientations, boxes):
        jitter = float(rng.normal(0.0, noise.angle_sigma))
        flip = rng.random() < noise.flip_prob
        drop = rng.random() < noise.drop_prob
        dup = rng.random() < noise.dup_prob
        dup_jitter = float(rng.normal(0.0, noise.angle_sigma))
        dup_dx, dup_dy = (float(x) for x in rng.normal(0.0, Config.DUPLICATE_BOX_JITTER * spec.dial_box, size=2))

        angle = normalize_angle(value_to_angle(value, orientation) + jitter)
        if flip:
            angle = normalize_angle(360.0 - angle)
        if drop:
            continue
        dials.append(detection(box, angle, orientation, Config.DETECTION_CONFIDENCE))
        if dup:
            dup_box = BBox(box.cx + dup_dx, box.cy + dup_dy, box.w, box.h)
            dials.append(detection(
                dup_box,
                normalize_angle(angle + dup_jitter),
                orientation,
                Config.DETECTION_CONFIDENCE * Config.DUPLICATE_CONFIDENCE_FACTOR,
            ))

    width, height = spec.canvas()
    observation = MeterObservation(
        image_id=f"sim-{sample_index:06d}",
        width=width,
        height=height,
        dials=dials,
    )
    return SyntheticSample(
        observation=observation,
        gt_reading=true_reading(spec.consumption, spec.k),
        gt_values=values,
        spec=spec,
        noise=noise,
        sample_index=sample_index,
    )


def generate(spec: MeterSpec, noise: Optional[NoiseModel] = None, sample_index: int = 0) -> SyntheticSample:
    """
    Render one synthetic meter.

    Args:
        spec: Meter layout and register position
        noise: Fault injection settings (perfect detector when omitted)
        sample_index: Index mixed into the seed, so batch members differ

    Returns:
        SyntheticSample
    """
    return _render(spec, noise or NoiseModel(), sample_index, spec.tilt)


def observe(sample: SyntheticSample, tilt_override: float) -> MeterObservation:
    """
    Re-render a sample, with the same injected faults, at another tilt.

    Any angle is accepted, including tilts outside the range a MeterSpec allows.
    """
    return _render(sample.spec, sample.noise, sample.sample_index, tilt_override).observation


def generate_batch(config: BatchConfig) -> List[SyntheticSample]:
    """Random meters for a batch; sample ``i`` depends only on (seed, i)."""
    samples = []
    for index in range(config.count):
        rng = np.random.default_rng([config.noise.seed, index, 0])
        if config.dials == "mixed":
            k = int(rng.integers(4, 6))
        else:
            k = int(config.dials)
        consumption = sample_consumption(rng, k, config.boundary_weight)
        tilt = float(rng.uniform(-config.tilt_max, config.tilt_max)) if config.tilt_max > 0 else 0.0
        spec = MeterSpec(
            k=k,
            consumption=consumption,
            tilt=tilt,
            payload_kind=config.payload_kind,
            aux_kind=config.aux_kind,
        )
        samples.append(generate(spec, config.noise, sample_index=index))
    logger.info(f"Generated {len(samples)} synthetic meters (seed {config.noise.seed})")
    return samples
