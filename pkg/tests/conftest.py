"""
Shared pytest fixtures.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the src directory to Python path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / 'src'))

from backend.dial_model import orientation_pattern, value_to_angle  # noqa: E402
from backend.geometry import encode_angle  # noqa: E402
from backend.models import BBox, DialDetection, MeterObservation, Payload, PayloadKind  # noqa: E402

FIXTURES = Path(__file__).resolve().parent / 'fixtures'


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def _payload(kind: PayloadKind, value: float, orientation) -> Payload:
    if kind is PayloadKind.VALUE:
        return Payload.value(value)
    if kind is PayloadKind.SINCOS:
        vec = encode_angle(value_to_angle(value, orientation))
        return Payload.sincos(vec.s, vec.c)
    scores = [0.0] * 10
    scores[int(value) % 10] = 1.0
    return Payload.class_scores(scores)


@pytest.fixture
def make_observation():
    """Factory for a horizontal counter with one detection per dial value."""

    def build(values, kind=PayloadKind.VALUE, image_id="meter", pitch=80.0, size=60.0, aux_kind=None, cy=100.0):
        orientations = orientation_pattern(len(values)) if len(values) in (4, 5) else [None] * len(values)
        dials = []
        for i, (value, orientation) in enumerate(zip(values, orientations)):
            box = BBox(60.0 + i * pitch, cy, size, size)
            aux = _payload(aux_kind, value, orientation) if aux_kind else None
            dials.append(DialDetection(box, _payload(kind, value, orientation), 0.9, aux))
        width = 120.0 + len(values) * pitch
        return MeterObservation(image_id=image_id, width=width, height=2 * cy, dials=dials)

    return build

