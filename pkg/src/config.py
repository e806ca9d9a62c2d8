"""
Configuration settings for the dial meter reading toolkit.
"""

import logging
import os
from typing import List

logger = logging.getLogger(__name__)


def _lattice(start: float, stop: float, step: float) -> List[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(count)]


class Config:
    """Configuration class for the toolkit."""

    # Logging (the only setting read from the environment; it never changes outputs)
    LOG_LEVEL_ENV = 'DIALMETER_LOG_LEVEL'
    DEFAULT_LOG_LEVEL = "INFO"

    # Detection assembly
    NMS_IOU_THRESHOLD = 0.5
    HYBRID_PAIR_IOU = 0.5
    TILT_THRESHOLD_DEG = 2.5
    COLLINEARITY_FACTOR = 0.75  # times the median box height
    SUPPORTED_DIAL_COUNTS = (4, 5)

    # Carry correction defaults
    CARRY_UP_CUR_FRAC_MIN = 0.75
    CARRY_UP_NEXT_VAL_MAX = 2.5
    CARRY_DOWN_CUR_FRAC_MAX = 0.25
    CARRY_DOWN_NEXT_VAL_MIN = 7.5

    # Default calibration lattice
    GRID_CARRY_UP_CUR_FRAC = _lattice(0.55, 0.95, 0.05)
    GRID_CARRY_UP_NEXT_VAL = _lattice(0.5, 4.5, 0.5)
    GRID_CARRY_DOWN_CUR_FRAC = _lattice(0.05, 0.45, 0.05)
    GRID_CARRY_DOWN_NEXT_VAL = _lattice(5.5, 9.5, 0.5)

    # Simulator
    DIAL_PITCH_PX = 80.0
    DIAL_BOX_PX = 60.0
    CANVAS_MARGIN_PX = 20.0
    MAX_TILT_DEG = 45.0
    BOUNDARY_SIGMA = 0.05
    SCORE_SOFTENING = 0.01
    DETECTION_CONFIDENCE = 0.95
    DUPLICATE_CONFIDENCE_FACTOR = 0.9
    DUPLICATE_BOX_JITTER = 0.02  # times the box size

    # Evaluation
    DEFAULT_TOLERANCES = (0, 1)
    MAGNITUDE_BUCKETS = (
        ("1", 1, 1),
        ("2-9", 2, 9),
        ("10-99", 10, 99),
        ("100-999", 100, 999),
        ("1000+", 1000, None),
    )

    # Plausibility checks
    MAX_DAILY_KWH = 100.0

    @classmethod
    def log_level(cls) -> str:
        """Log level from the environment, falling back to the default."""
        level = os.getenv(cls.LOG_LEVEL_ENV, cls.DEFAULT_LOG_LEVEL).upper()
        if not isinstance(logging.getLevelName(level), int):
            logger.warning(f"Unknown log level {level!r}, using {cls.DEFAULT_LOG_LEVEL}")
            return cls.DEFAULT_LOG_LEVEL
        return level

    @classmethod
    def validate(cls) -> bool:
        """Validate that the built-in defaults are mutually consistent."""
        if not 0.5 < cls.CARRY_UP_CUR_FRAC_MIN < 1 or not 0 < cls.CARRY_DOWN_CUR_FRAC_MAX < 0.5:
            logger.error("Current-dial fraction thresholds are out of range")
            return False
        if not 0 < cls.CARRY_UP_NEXT_VAL_MAX < 5 or not 5 < cls.CARRY_DOWN_NEXT_VAL_MIN < 10:
            logger.error("Next-dial value thresholds are out of range")
            return False
        if cls.DIAL_BOX_PX <= 0 or cls.DIAL_PITCH_PX < cls.DIAL_BOX_PX:
            logger.error("Dial boxes must be positive and no wider than the dial pitch")
            return False
        if not 0 < cls.NMS_IOU_THRESHOLD <= 1:
            logger.error("NMS IoU threshold must lie in (0, 1]")
            return False
        return True
