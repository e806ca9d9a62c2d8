"""
Mean average precision for per-dial digit detectors.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from backend.errors import EmptyEvaluationSet, EmptyGroundTruth, ValidationError
from backend.geometry import iou
from backend.models import BBox

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredBox:
    box: BBox
    cls: int
    confidence: float


@dataclass(frozen=True)
class LabeledBox:
    box: BBox
    cls: int


@dataclass
class DetectionScene:
    """Predicted and ground-truth boxes of one image."""
    image_id: str
    predictions: List[ScoredBox] = field(default_factory=list)
    ground_truth: List[LabeledBox] = field(default_factory=list)

    def __post_init__(self):
        for name in ('predictions', 'ground_truth'):
            for index, item in enumerate(getattr(self, name)):
                if not 0 <= item.cls <= 9:
                    raise ValidationError(f"class must lie in [0, 9], got {item.cls}", path=f"{name}[{index}].cls")


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """
    Area under the precision-recall curve, every-point interpolation.

    Precision is first made non-increasing from the right, then summed over
    the recall steps.
    """
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.flip(np.maximum.accumulate(np.flip(mpre)))
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _rank_key(det: ScoredBox) -> Tuple[float, float, float, float, float]:
    return (-det.confidence, det.box.cx, det.box.cy, det.box.w, det.box.h)


def _match_class(scenes: Sequence[DetectionScene], cls: int, iou_threshold: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Greedy matching of one class.

    Matching is independent per scene; tied detections inside a scene are
    taken in box order, never input order.

    Returns:
        Tuple of (true-positive flags, confidences, GT count), flags and
        confidences sorted by descending confidence
    """
    results = []
    n_gt = 0
    for scene in scenes:
        gt_boxes = [g.box for g in scene.ground_truth if g.cls == cls]
        matched = [False] * len(gt_boxes)
        n_gt += len(gt_boxes)
        for det in sorted((d for d in scene.predictions if d.cls == cls), key=_rank_key):
            best_iou, best_gt = 0.0, None
            for gt_index, gt_box in enumerate(gt_boxes):
                if matched[gt_index]:
                    continue
                overlap = iou(det.box, gt_box)
                if overlap > best_iou:
                    best_iou, best_gt = overlap, gt_index
            hit = best_gt is not None and best_iou >= iou_threshold
            if hit:
                matched[best_gt] = True
            results.append((det.confidence, hit))

    results.sort(key=lambda item: -item[0])
    flags = np.array([hit for _, hit in results], dtype=bool)
    confidences = np.array([confidence for confidence, _ in results], dtype=float)
    return flags, confidences, n_gt


def mean_ap(scenes: Sequence[DetectionScene], iou_threshold: float = 0.5) -> Tuple[Dict[int, float], float]:
    """
    Per-class AP and their mean over classes that have ground truth.

    Detections with equal confidence contribute a single precision-recall
    point, so the result does not depend on the order of the scenes.

    Args:
        scenes: Images with predicted and ground-truth boxes
        iou_threshold: Minimum overlap for a true positive

    Returns:
        Tuple of (AP per class, mAP)
    """
    if not scenes:
        raise EmptyEvaluationSet("no detection scenes to evaluate")
    classes = sorted({g.cls for scene in scenes for g in scene.ground_truth})
    if not classes:
        raise EmptyGroundTruth("mean AP needs at least one ground-truth box")

    per_class = {}
    for cls in classes:
        flags, confidences, n_gt = _match_class(scenes, cls, iou_threshold)
        if flags.size == 0:
            per_class[cls] = 0.0
            continue
        # one curve point per distinct confidence
        last_of_group = np.append(confidences[1:] != confidences[:-1], True)
        tp = np.cumsum(flags)[last_of_group]
        fp = np.cumsum(~flags)[last_of_group]
        recall = tp / n_gt
        precision = tp / (tp + fp)
        per_class[cls] = average_precision(recall, precision)

    m_ap = float(np.mean([per_class[c] for c in classes]))
    logger.info(f"mAP@{iou_threshold} over {len(classes)} classes: {m_ap:.4f}")
    return per_class, m_ap
