"""
Sanity checks of a reading against the meter's previous reading.

A register only moves forward, and a household cannot consume more than a
bounded amount per day. Readings that break either rule are flagged so
they can be sent for manual review instead of being billed.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional

from backend.dial_model import check_dial_count
from backend.errors import ValidationError
from config import Config

logger = logging.getLogger(__name__)


class PlausibilityVerdict(Enum):
    OK = "ok"
    ROLLOVER = "rollover"    # register wrapped past all nines
    DECREASED = "decreased"
    EXCESSIVE = "excessive"


@dataclass
class PlausibilityResult:
    image_id: str
    verdict: PlausibilityVerdict
    consumed: Optional[int] = None

    @property
    def needs_review(self) -> bool:
        return self.verdict in (PlausibilityVerdict.DECREASED, PlausibilityVerdict.EXCESSIVE)

    def to_dict(self) -> Dict:
        return {'image_id': self.image_id, 'verdict': self.verdict.value, 'consumed': self.consumed}


def check_reading(
    current: int,
    previous: Optional[int],
    k: int,
    max_daily_kwh: float = Config.MAX_DAILY_KWH,
    days: float = 1.0,
) -> PlausibilityVerdict:
    """
    Judge a reading against the previous one.

    Args:
        current: Integer reading just taken
        previous: Previous integer reading of the same meter, if known
        k: Number of dials on the meter
        max_daily_kwh: Largest believable consumption per day
        days: Days elapsed since the previous reading

    Returns:
        PlausibilityVerdict
    """
    check_dial_count(k)
    if current < 0 or (previous is not None and previous < 0):
        raise ValidationError("readings must be non-negative", path="reading")
    if max_daily_kwh < 0 or days < 0:
        raise ValidationError("consumption allowance must be non-negative", path="days")
    if previous is None:
        return PlausibilityVerdict.OK
    allowance = max_daily_kwh * days
    if current >= previous:
        return PlausibilityVerdict.OK if current - previous <= allowance else PlausibilityVerdict.EXCESSIVE
    if current + 10 ** k - previous <= allowance:
        return PlausibilityVerdict.ROLLOVER
    return PlausibilityVerdict.DECREASED


def consumed_since(current: int, previous: int, k: int, verdict: PlausibilityVerdict) -> Optional[int]:
    if verdict is PlausibilityVerdict.ROLLOVER:
        return current + 10 ** k - previous
    if verdict in (PlausibilityVerdict.OK, PlausibilityVerdict.EXCESSIVE):
        return current - previous
    return None


def check_batch(
    digits_by_image: Mapping[str, str],
    previous_by_image: Mapping[str, int],
    max_daily_kwh: float = Config.MAX_DAILY_KWH,
    days: float = 1.0,
) -> List[PlausibilityResult]:
    """Check every reading (digit string by image id) against the previous reading of that image."""
    results = []
    for image_id, digits in digits_by_image.items():
        current = int(digits)
        previous = previous_by_image.get(image_id)
        verdict = check_reading(current, previous, len(digits), max_daily_kwh, days)
        consumed = None if previous is None else consumed_since(current, previous, len(digits), verdict)
        results.append(PlausibilityResult(image_id, verdict, consumed))
    flagged = sum(r.needs_review for r in results)
    if flagged:
        logger.warning(f"{flagged}/{len(results)} readings need manual review")
    return results
