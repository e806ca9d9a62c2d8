"""
Reading-level evaluation metrics.

Aggregates use exact integer counts or ``math.fsum`` so that they do not
depend on the order in which pairs are given.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence

import Levenshtein
import numpy as np
import pandas as pd

from backend.errors import EmptyEvaluationSet, ParseError, ShapeMismatch, ValidationError
from config import Config

logger = logging.getLogger(__name__)


class ErrorKind(Enum):
    """Classification of a wrong dial."""
    NEIGHBORING = "neighboring"  # off by one, mod 10
    SYMMETRY = "symmetry"        # mirrored label, d read as 9 - d
    OTHER = "other"
    LENGTH = "length"            # prediction and truth differ in dial count


@dataclass(frozen=True)
class ReadingPair:
    """A predicted reading and its ground truth."""
    pred: str
    gt: str

    def __post_init__(self):
        for name in ('pred', 'gt'):
            value = getattr(self, name)
            if not value or not value.isdigit():
                raise ValidationError(f"reading must be a non-empty digit string, got {value!r}", path=name)


@dataclass
class MetricsReport:
    """Everything ``evaluate`` measures on one set of pairs."""
    n_meters: int
    mrr: float
    drr: float
    mae: float
    tolerant_mrr: Dict[int, float]
    position_errors: Dict[int, float]
    magnitude_histogram: Dict[str, int]
    unequal_length_count: int
    error_kinds: Dict[str, int]
    cost: Optional[float] = None
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the report-file document (string keys throughout)."""
        return {
            'n': self.n_meters,
            'mrr': self.mrr,
            'drr': self.drr,
            'mae': self.mae,
            'tolerant_mrr': {str(k): v for k, v in sorted(self.tolerant_mrr.items())},
            'position_errors': {str(k): v for k, v in sorted(self.position_errors.items())},
            'magnitude_histogram': dict(self.magnitude_histogram),
            'unequal_length_count': self.unequal_length_count,
            'error_kinds': dict(self.error_kinds),
            'cost': self.cost,
            'config': self.config,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        return cls(
            n_meters=data['n'],
            mrr=data['mrr'],
            drr=data['drr'],
            mae=data['mae'],
            tolerant_mrr={int(k): v for k, v in data['tolerant_mrr'].items()},
            position_errors={int(k): v for k, v in data['position_errors'].items()},
            magnitude_histogram=dict(data['magnitude_histogram']),
            unequal_length_count=data['unequal_length_count'],
            error_kinds=dict(data['error_kinds']),
            cost=data.get('cost'),
            config=dict(data.get('config') or {}),
        )


def _require(pairs: Sequence[ReadingPair]) -> None:
    if not pairs:
        raise EmptyEvaluationSet("no reading pairs to evaluate")


def _as_int(reading: str) -> int:
    if not reading.isdigit():
        raise ParseError(f"reading {reading!r} is not a non-negative integer")
    return int(reading)


def _abs_errors(pairs: Sequence[ReadingPair]) -> List[int]:
    return [abs(_as_int(p.pred) - _as_int(p.gt)) for p in pairs]


def mrr(pairs: Sequence[ReadingPair]) -> float:
    """Meter recognition rate: share of exact string matches."""
    _require(pairs)
    return sum(p.pred == p.gt for p in pairs) / len(pairs)


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert, delete and substitute costs."""
    return Levenshtein.distance(a, b)


def drr(pairs: Sequence[ReadingPair]) -> float:
    """Dial recognition rate: mean of one minus the length-normalised edit distance."""
    _require(pairs)
    scores = [1 - levenshtein(p.pred, p.gt) / max(len(p.pred), len(p.gt)) for p in pairs]
    return math.fsum(scores) / len(pairs)


def mae(pairs: Sequence[ReadingPair]) -> float:
    """Mean absolute error between integer readings, in kWh."""
    _require(pairs)
    return sum(_abs_errors(pairs)) / len(pairs)


def tolerant_mrr(pairs: Sequence[ReadingPair], tolerance: int) -> float:
    """Share of readings within ``tolerance`` kWh of the truth."""
    _require(pairs)
    if tolerance < 0:
        raise ValueError(f"tolerance must be non-negative, got {tolerance}")
    return sum(err <= tolerance for err in _abs_errors(pairs)) / len(pairs)


def error_position_distribution(pairs: Sequence[ReadingPair]) -> Dict[int, float]:
    """
    Share of wrong dials at each position (1 is the leftmost).

    Only pairs of equal length are counted; returns an empty map when no such
    pair has a wrong dial.
    """
    _require(pairs)
    counts: Counter = Counter()
    for pair in pairs:
        if len(pair.pred) != len(pair.gt):
            continue
        for position, (a, b) in enumerate(zip(pair.pred, pair.gt), start=1):
            if a != b:
                counts[position] += 1
    total = sum(counts.values())
    return {position: counts[position] / total for position in sorted(counts)}


def unequal_length_count(pairs: Sequence[ReadingPair]) -> int:
    return sum(len(p.pred) != len(p.gt) for p in pairs)


def magnitude_bucket(error: int) -> Optional[str]:
    """Histogram bucket label for an absolute error; ``None`` for a correct reading."""
    for label, low, high in Config.MAGNITUDE_BUCKETS:
        if error >= low and (high is None or error <= high):
            return label
    return None


def magnitude_histogram(pairs: Sequence[ReadingPair]) -> Dict[str, int]:
    """Number of wrong readings per absolute-error bucket."""
    _require(pairs)
    histogram = {label: 0 for label, _, _ in Config.MAGNITUDE_BUCKETS}
    for err in _abs_errors(pairs):
        label = magnitude_bucket(err)
        if label is not None:
            histogram[label] += 1
    return histogram


def classify_error(pred: str, gt: str) -> List[ErrorKind]:
    """Kind of every wrong dial in one pair."""
    if len(pred) != len(gt):
        return [ErrorKind.LENGTH]
    kinds = []
    for a, b in zip(pred, gt):
        if a == b:
            continue
        p, g = int(a), int(b)
        if (p - g) % 10 in (1, 9):
            kinds.append(ErrorKind.NEIGHBORING)
        elif p == 9 - g:
            kinds.append(ErrorKind.SYMMETRY)
        else:
            kinds.append(ErrorKind.OTHER)
    return kinds


def error_kind_distribution(pairs: Sequence[ReadingPair]) -> Dict[str, int]:
    """Number of wrong dials of each kind."""
    _require(pairs)
    counts = {kind.value: 0 for kind in ErrorKind}
    for pair in pairs:
        for kind in classify_error(pair.pred, pair.gt):
            counts[kind.value] += 1
    return counts


def mse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Mean squared error of paired real sequences."""
    pred = np.asarray(predictions, dtype=float)
    target = np.asarray(targets, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape[0]} predictions against {target.shape[0]} targets")
    if pred.size == 0:
        raise EmptyEvaluationSet("no values to compare")
    return float(np.mean((pred - target) ** 2))


def rmse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    return math.sqrt(mse(predictions, targets))


def billing_cost(report: MetricsReport, tariff_per_kwh: float) -> float:
    """Mean billing error per meter implied by the report's MAE."""
    return report.mae * tariff_per_kwh


def evaluate(
    pairs: Sequence[ReadingPair],
    tolerances: Iterable[int] = Config.DEFAULT_TOLERANCES,
    tariff_per_kwh: Optional[float] = None,
) -> MetricsReport:
    """
    Compute the full metrics report for a set of pairs.

    Args:
        pairs: Predicted and ground-truth readings
        tolerances: Error tolerances (kWh) for the tolerant recognition rate
        tariff_per_kwh: Optional price used to express MAE as a billing error

    Returns:
        MetricsReport
    """
    _require(pairs)
    report = MetricsReport(
        n_meters=len(pairs),
        mrr=mrr(pairs),
        drr=drr(pairs),
        mae=mae(pairs),
        tolerant_mrr={t: tolerant_mrr(pairs, t) for t in sorted(set(tolerances))},
        position_errors=error_position_distribution(pairs),
        magnitude_histogram=magnitude_histogram(pairs),
        unequal_length_count=unequal_length_count(pairs),
        error_kinds=error_kind_distribution(pairs),
    )
    if tariff_per_kwh is not None:
        report.cost = billing_cost(report, tariff_per_kwh)
    logger.info(f"Evaluated {report.n_meters} meters: MRR {report.mrr:.4f}, DRR {report.drr:.4f}, MAE {report.mae:.2f}")
    return report


def pairs_frame(pairs: Sequence[ReadingPair]) -> pd.DataFrame:
    """Per-pair table used by the dashboard."""
    rows = []
    for pair in pairs:
        numeric = pair.pred.isdigit() and pair.gt.isdigit()
        rows.append({
            'pred': pair.pred,
            'gt': pair.gt,
            'exact': pair.pred == pair.gt,
            'levenshtein': levenshtein(pair.pred, pair.gt),
            'abs_error': abs(int(pair.pred) - int(pair.gt)) if numeric else None,
            'error_kinds': ','.join(k.value for k in classify_error(pair.pred, pair.gt)),
        })
    return pd.DataFrame(rows, columns=['pred', 'gt', 'exact', 'levenshtein', 'abs_error', 'error_kinds'])
