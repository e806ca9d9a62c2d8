"""
Cross-dial carry correction and threshold calibration.

A dial's pointer and the dial to its right move together: once the right dial
wraps past 0 the current dial must have crossed onto its next digit. When the
current dial's fractional part disagrees with where its right neighbour sits,
the digit is moved one step up or down. Dials are processed right to left and
each dial is checked against the already corrected value of its neighbour, so
carries can cascade.
"""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from backend.dial_model import BOUNDARY_EPS, floor_value, fractional_part, value_to_digit
from backend.errors import EmptyCalibrationSet, ValidationError
from backend.models import CalibrationGrid, CorrectionThresholds
from config import Config

logger = logging.getLogger(__name__)

CalibrationSample = Tuple[Sequence[float], str]


@dataclass
class SequenceCorrection:
    """Outcome of correcting one counter."""
    digits: List[int]
    values: List[float]
    fired: int


def carry_direction(v_cur: float, v_next: float, t: CorrectionThresholds) -> int:
    """
    Decide whether a dial's digit should move.

    Returns:
        +1 for a carry up, -1 for a carry down, 0 when the pair is consistent
    """
    frac = fractional_part(v_cur)
    if t.carry_up_enabled and frac >= t.carry_up_cur_frac_min and v_next < t.carry_up_next_val_max:
        return 1
    if t.carry_down_enabled and frac <= t.carry_down_cur_frac_max and v_next >= t.carry_down_next_val_min:
        return -1
    return 0


def correct_dial(v_cur: float, v_next: float, t: CorrectionThresholds) -> Tuple[float, int]:
    """
    Correct one dial against the dial immediately to its right.

    Args:
        v_cur: Continuous value of the dial being checked
        v_next: Continuous (already corrected) value of the dial on its right
        t: Correction thresholds

    Returns:
        Tuple of (corrected continuous value, digit)
    """
    digit = (floor_value(v_cur) + carry_direction(v_cur, v_next, t)) % 10
    return digit + v_next / 10, digit


def correct_sequence_detailed(
    values: Sequence[Optional[float]],
    t: CorrectionThresholds,
    base_digits: Optional[Sequence[int]] = None,
) -> SequenceCorrection:
    """
    Correct a whole counter, right to left.

    Args:
        values: Continuous dial values, most significant first. ``None`` marks
            a dial without a continuous reading; it is left uncorrected and
            cannot vouch for the dial on its left.
        t: Correction thresholds
        base_digits: Digits to correct instead of the floors of ``values``
            (class predictions in hybrid mode)

    Returns:
        Corrected digits, corrected values and the number of rules that fired
    """
    n = len(values)
    if base_digits is None:
        if any(v is None for v in values):
            raise ValueError("base digits are required when a dial has no continuous value")
        base = [value_to_digit(v) for v in values]
    else:
        if len(base_digits) != n:
            raise ValueError("base digits and values differ in length")
        base = list(base_digits)
    if n == 0:
        return SequenceCorrection(digits=[], values=[], fired=0)

    digits = [0] * n
    corrected = [0.0] * n
    fired = 0

    digits[-1] = base[-1]
    corrected[-1] = float(base[-1]) if values[-1] is None else values[-1]
    next_value = values[-1]

    for i in range(n - 2, -1, -1):
        v = values[i]
        if v is None:
            digits[i] = base[i]
            corrected[i] = float(base[i])
            next_value = None
            continue
        if next_value is None:
            digits[i] = base[i]
            corrected[i] = v
            next_value = v
            continue
        direction = carry_direction(v, next_value, t)
        if direction:
            fired += 1
            logger.debug(f"Dial {i + 1}: {v:.4f} against {next_value:.4f} moved by {direction:+d}")
        digits[i] = (base[i] + direction) % 10
        corrected[i] = digits[i] + next_value / 10
        next_value = corrected[i]

    return SequenceCorrection(digits=digits, values=corrected, fired=fired)


def correct_sequence(values: Sequence[float], t: CorrectionThresholds) -> List[int]:
    """Corrected digits of a counter; see ``correct_sequence_detailed``."""
    return correct_sequence_detailed(values, t).digits


def display_value(v: float) -> float:
    """Truncate a dial value to one decimal for display (4.22 shows as 4.2)."""
    return floor_value(v * 10) / 10


def default_grid() -> CalibrationGrid:
    return CalibrationGrid(
        carry_up_cur_frac_min=list(Config.GRID_CARRY_UP_CUR_FRAC),
        carry_up_next_val_max=list(Config.GRID_CARRY_UP_NEXT_VAL),
        carry_down_cur_frac_max=list(Config.GRID_CARRY_DOWN_CUR_FRAC),
        carry_down_next_val_min=list(Config.GRID_CARRY_DOWN_NEXT_VAL),
    )


def _thresholds_at(point: Sequence[float], carry_up_enabled: bool, carry_down_enabled: bool) -> CorrectionThresholds:
    return CorrectionThresholds(*point, carry_up_enabled=carry_up_enabled, carry_down_enabled=carry_down_enabled)


def _check_samples(samples: Sequence[CalibrationSample]) -> None:
    if not samples:
        raise EmptyCalibrationSet("calibration needs at least one sample")
    for index, (values, gt) in enumerate(samples):
        if len(values) != len(gt) or not gt.isdigit():
            raise ValidationError(
                f"ground truth {gt!r} does not match {len(values)} dial values",
                path=f"samples[{index}]",
            )


class _LengthGroup:
    """Samples sharing one dial count, stacked for vectorised correction."""

    def __init__(self, samples: Sequence[CalibrationSample]):
        self.values = np.array([list(v) for v, _ in samples], dtype=float)
        self.gt_digits = np.array([[int(ch) for ch in gt] for _, gt in samples], dtype=np.int64)
        self.k = self.values.shape[1]
        self.powers = 10 ** np.arange(self.k - 1, -1, -1, dtype=np.int64)
        self.gt_ints = self.gt_digits @ self.powers
        self.floors = np.floor(self.values + BOUNDARY_EPS)
        self.fracs = np.maximum(self.values - self.floors, 0.0)

    def correct(self, t: CorrectionThresholds) -> np.ndarray:
        """Vectorised twin of ``correct_sequence`` over all rows."""
        digits = np.empty(self.values.shape, dtype=np.int64)
        digits[:, -1] = np.mod(self.floors[:, -1], 10).astype(np.int64)
        nxt = self.values[:, -1]
        for i in range(self.k - 2, -1, -1):
            frac = self.fracs[:, i]
            up = np.zeros(len(frac), dtype=bool)
            down = np.zeros(len(frac), dtype=bool)
            if t.carry_up_enabled:
                up = (frac >= t.carry_up_cur_frac_min) & (nxt < t.carry_up_next_val_max)
            if t.carry_down_enabled:
                down = ~up & (frac <= t.carry_down_cur_frac_max) & (nxt >= t.carry_down_next_val_min)
            digit = np.mod(self.floors[:, i] + up - down, 10)
            digits[:, i] = digit.astype(np.int64)
            nxt = digit + nxt / 10
        return digits

    def score(self, digits: np.ndarray) -> Tuple[int, Fraction, int]:
        """Matches, summed normalised edit distance and summed absolute error."""
        mismatch = digits != self.gt_digits
        wrong_rows = mismatch.any(axis=1)
        matches = int(len(digits) - wrong_rows.sum())
        abs_err = int(np.abs(digits @ self.powers - self.gt_ints).sum())
        lev_total = 0
        if wrong_rows.any():
            lev_total = int(_levenshtein_rows(digits[wrong_rows], self.gt_digits[wrong_rows]).sum())
        return matches, Fraction(lev_total, self.k), abs_err


def _levenshtein_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Edit distance between paired rows of two equal-width digit matrices."""
    n, k = a.shape
    prev = np.tile(np.arange(k + 1, dtype=np.int64), (n, 1))
    for i in range(1, k + 1):
        cur = np.empty_like(prev)
        cur[:, 0] = i
        for j in range(1, k + 1):
            cost = (a[:, i - 1] != b[:, j - 1]).astype(np.int64)
            cur[:, j] = np.minimum(np.minimum(prev[:, j] + 1, cur[:, j - 1] + 1), prev[:, j - 1] + cost)
        prev = cur
    return prev[:, k]


def calibrate(
    samples: Sequence[CalibrationSample],
    grid: CalibrationGrid,
    carry_up_enabled: bool = True,
    carry_down_enabled: bool = True,
) -> CorrectionThresholds:
    """
    Pick the thresholds that read the most samples correctly.

    Every grid point is evaluated. Ties on meter recognition rate are broken
    by higher dial recognition rate, then lower mean absolute error, then the
    lexicographically smallest threshold tuple. Scores are kept as exact
    integers and fractions so that ties are real ties.

    Args:
        samples: Pairs of (continuous dial values, ground-truth digit string)
        grid: Candidate thresholds
        carry_up_enabled: Whether carry-up corrections may fire
        carry_down_enabled: Whether carry-down corrections may fire

    Returns:
        The best threshold set
    """
    _check_samples(samples)
    by_length = {}
    for sample in samples:
        by_length.setdefault(len(sample[1]), []).append(sample)
    groups = [_LengthGroup(by_length[k]) for k in sorted(by_length)]

    best_point = None
    best_key = None
    for point in itertools.product(*grid.axes()):
        t = _thresholds_at(point, carry_up_enabled, carry_down_enabled)
        matches, lev, abs_err = 0, Fraction(0), 0
        for group in groups:
            m, l, e = group.score(group.correct(t))
            matches += m
            lev += l
            abs_err += e
        key = (matches, -lev, -abs_err)
        # Points arrive in lexicographic order, so only a strict improvement replaces.
        if best_key is None or key > best_key:
            best_key, best_point = key, point

    result = _thresholds_at(best_point, carry_up_enabled, carry_down_enabled)
    logger.info(
        f"Calibrated over {grid.size()} grid points and {len(samples)} samples: "
        f"{result.as_tuple()} reads {best_key[0]}/{len(samples)} meters correctly"
    )
    return result


def _naive_levenshtein(a: str, b: str) -> int:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        for j in range(len(b) + 1):
            if i == 0 or j == 0:
                table[i][j] = i + j
            else:
                table[i][j] = min(
                    table[i - 1][j] + 1,
                    table[i][j - 1] + 1,
                    table[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
                )
    return table[len(a)][len(b)]


def oracle_calibrate(
    samples: Sequence[CalibrationSample],
    grid: CalibrationGrid,
    carry_up_enabled: bool = True,
    carry_down_enabled: bool = True,
) -> CorrectionThresholds:
    """
    Reference implementation of ``calibrate`` for tests.

    Plain nested loops; every metric is recomputed from the predicted strings
    at every grid point.
    """
    _check_samples(samples)
    n = len(samples)
    best = None
    for a in grid.carry_up_cur_frac_min:
        for b in grid.carry_up_next_val_max:
            for c in grid.carry_down_cur_frac_max:
                for d in grid.carry_down_next_val_min:
                    t = _thresholds_at((a, b, c, d), carry_up_enabled, carry_down_enabled)
                    preds = [''.join(str(x) for x in correct_sequence(values, t)) for values, _ in samples]
                    mrr = Fraction(sum(p == g for p, (_, g) in zip(preds, samples)), n)
                    drr = sum(
                        (1 - Fraction(_naive_levenshtein(p, g), max(len(p), len(g)))
                         for p, (_, g) in zip(preds, samples)),
                        Fraction(0),
                    ) / n
                    mae = Fraction(sum(abs(int(p) - int(g)) for p, (_, g) in zip(preds, samples)), n)
                    candidate = (mrr, drr, mae, (a, b, c, d))
                    if best is None:
                        best = candidate
                        continue
                    if candidate[0] != best[0]:
                        better = candidate[0] > best[0]
                    elif candidate[1] != best[1]:
                        better = candidate[1] > best[1]
                    elif candidate[2] != best[2]:
                        better = candidate[2] < best[2]
                    else:
                        better = candidate[3] < best[3]
                    if better:
                        best = candidate
    return _thresholds_at(best[3], carry_up_enabled, carry_down_enabled)
