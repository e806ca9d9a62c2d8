"""
Angle and box geometry shared by the reading pipeline and the simulator.

Angles are public in degrees. A dial angle is a clock angle: degrees
clockwise from the 12 o'clock position, so ``encode_angle(0)`` is (0, 1).
Image coordinates are raster coordinates with y growing downward.
"""

import math
from typing import Sequence, Tuple

import numpy as np

from backend.errors import DegenerateSegment, InvalidAngle
from backend.models import BBox, UnitVec

Point = Tuple[float, float]


def normalize_angle(raw: float) -> float:
    """
    Reduce an angle to the half-open interval [0, 360).

    Args:
        raw: Angle in degrees, any finite real

    Returns:
        Equivalent angle in [0, 360)
    """
    if not math.isfinite(raw):
        raise InvalidAngle(f"angle must be finite, got {raw}")
    angle = float(raw) % 360.0
    # -1e-20 % 360 rounds up to 360.0
    return 0.0 if angle >= 360.0 else angle


def circular_distance(a: float, b: float) -> float:
    """Smallest absolute difference between two angles, in degrees."""
    diff = abs(normalize_angle(a) - normalize_angle(b))
    return min(diff, 360.0 - diff)


def encode_angle(theta: float) -> UnitVec:
    """Map a clock angle onto the unit circle as (sin, cos)."""
    rad = np.deg2rad(normalize_angle(theta))
    return UnitVec(s=float(np.sin(rad)), c=float(np.cos(rad)))


def decode_angle(s: float, c: float) -> float:
    """
    Recover a clock angle from a (sin, cos) pair.

    The pair need not be unit-norm; arctan2 is scale-invariant. The origin
    decodes to 0.
    """
    if not (math.isfinite(s) and math.isfinite(c)):
        raise InvalidAngle(f"sin/cos pair must be finite, got ({s}, {c})")
    if s == 0 and c == 0:
        return 0.0
    return normalize_angle(float(np.rad2deg(np.arctan2(s, c))))


def rotate_unit(s: float, c: float, phi: float) -> Tuple[float, float]:
    """Shift the clock angle of a raw (sin, cos) pair by ``phi`` degrees, keeping its norm."""
    rad = math.radians(phi)
    cos_phi, sin_phi = math.cos(rad), math.sin(rad)
    return (s * cos_phi + c * sin_phi, c * cos_phi - s * sin_phi)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two axis-aligned boxes."""
    inter_w = min(a.x2, b.x2) - max(a.x1, b.x1)
    inter_h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    intersection = inter_w * inter_h
    union = a.area + b.area - intersection
    return min(1.0, intersection / union)


def segment_angle(p1: Point, p2: Point) -> float:
    """
    Tilt of the line through two points relative to the x-axis.

    The result is direction-free and lies in (-90, 90]; positive means the
    line descends to the right on screen.
    """
    dx = p2[0] - p1[0]
    dy = p2[1] - p1[1]
    if dx == 0 and dy == 0:
        raise DegenerateSegment(f"points coincide at {p1}")
    angle = math.degrees(math.atan2(dy, dx))
    if angle > 90.0:
        angle -= 180.0
    elif angle <= -90.0:
        angle += 180.0
    return angle


def rotation_matrix(phi: float) -> np.ndarray:
    """2x2 rotation by ``phi`` degrees; positive turns +x toward +y (clockwise on screen)."""
    rad = np.deg2rad(phi)
    return np.array([[np.cos(rad), -np.sin(rad)],
                     [np.sin(rad), np.cos(rad)]])


def rotate_points(points: Sequence[Point], center: Point, phi: float) -> np.ndarray:
    """Rotate many points about ``center``; returns an (n, 2) array."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    origin = np.asarray(center, dtype=float)
    return (pts - origin) @ rotation_matrix(phi).T + origin


def rotate_point(p: Point, center: Point, phi: float) -> Point:
    """Rotate a single point about ``center`` by ``phi`` degrees."""
    x, y = rotate_points([p], center, phi)[0]
    return (float(x), float(y))


def point_line_distance(p: Point, a: Point, b: Point) -> float:
    """Perpendicular distance from ``p`` to the line through ``a`` and ``b``."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    length = math.hypot(dx, dy)
    if length == 0:
        raise DegenerateSegment(f"points coincide at {a}")
    return abs(dx * (p[1] - a[1]) - dy * (p[0] - a[0])) / length
