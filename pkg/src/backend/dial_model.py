"""
Dial orientation patterns and the mapping between dial values, pointer angles
and the consumption register behind them.
"""

import math
from typing import List

from backend.errors import ConsumptionOverflow, UnsupportedDialCount
from backend.geometry import normalize_angle
from backend.models import Orientation
from config import Config

# Values closer than this below an integer are floored up to it.
BOUNDARY_EPS = 1e-9
DEGREES_PER_UNIT = 36.0


def check_dial_count(k: int) -> int:
    if k not in Config.SUPPORTED_DIAL_COUNTS:
        raise UnsupportedDialCount(k)
    return k


def alternating_pattern(n: int) -> List[Orientation]:
    """Alternating orientations for ``n`` dials, rightmost clockwise."""
    return [Orientation.CW if (n - 1 - i) % 2 == 0 else Orientation.CCW for i in range(n)]


def orientation_pattern(k: int) -> List[Orientation]:
    """
    Orientation of each dial, left to right.

    Args:
        k: Number of dials (4 or 5)

    Returns:
        Alternating orientations ending in CW at the least significant dial
    """
    return alternating_pattern(check_dial_count(k))


def value_to_angle(v: float, orientation: Orientation) -> float:
    """Clock angle at which a pointer shows dial value ``v``."""
    if orientation is Orientation.CW:
        return normalize_angle(DEGREES_PER_UNIT * v)
    return normalize_angle(360.0 - DEGREES_PER_UNIT * v)


def angle_to_value(theta: float, orientation: Orientation) -> float:
    """Dial value shown by a pointer at clock angle ``theta``."""
    theta = normalize_angle(theta)
    if orientation is Orientation.CW:
        value = theta / DEGREES_PER_UNIT
    else:
        value = ((360.0 - theta) / DEGREES_PER_UNIT) % 10.0
    return 0.0 if value >= 10.0 else value


def mirror_value(v: float) -> float:
    """Value read at the same pointer angle under the opposite orientation."""
    mirrored = (10.0 - v) % 10.0
    return 0.0 if mirrored >= 10.0 else mirrored


def mirror_digit(d: int) -> int:
    """Digit label of the mirrored floor interval: [d, d+1) maps to [9-d, 10-d)."""
    if not 0 <= d <= 9:
        raise ValueError(f"digit must lie in [0, 9], got {d}")
    return 9 - d


def relabel_digit_to_cw(d: int, orientation: Orientation) -> int:
    """Express a dial label in the clockwise label space."""
    return d if orientation is Orientation.CW else mirror_digit(d)


def relabel_digit_from_cw(d: int, orientation: Orientation) -> int:
    """Inverse of ``relabel_digit_to_cw``."""
    return relabel_digit_to_cw(d, orientation)


def floor_value(v: float) -> int:
    """Integer part of a dial value, with the boundary guard band applied."""
    return int(math.floor(v + BOUNDARY_EPS))


def value_to_digit(v: float) -> int:
    """Digit shown by a continuous dial value."""
    return floor_value(v) % 10


def fractional_part(v: float) -> float:
    return max(0.0, v - floor_value(v))


def _check_consumption(consumption: float, k: int) -> None:
    check_dial_count(k)
    if not math.isfinite(consumption) or consumption < 0 or consumption >= 10 ** k:
        raise ConsumptionOverflow(f"consumption {consumption} does not fit on {k} dials")


def decompose_consumption(consumption: float, k: int) -> List[float]:
    """
    Continuous value of every dial for a register position.

    Args:
        consumption: Register position in kWh
        k: Number of dials

    Returns:
        Dial values, most significant first
    """
    _check_consumption(consumption, k)
    return [(consumption / 10 ** (k - i)) % 10.0 for i in range(1, k + 1)]


def true_reading(consumption: float, k: int) -> str:
    """Zero-padded integer reading the register shows."""
    _check_consumption(consumption, k)
    return f"{int(math.floor(consumption)):0{k}d}"
