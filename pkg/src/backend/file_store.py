"""
Reading and writing the toolkit's files.

Detections, ground truth and predictions are JSON Lines, one record per
image. Records are checked in two steps: a pydantic model validates the
structure of the line, then the domain constructors check the invariants.
Either failure is reported with the 1-based line number and a field path
such as ``dials[0].bbox.w``.

All files are UTF-8 with LF line endings.

The writers emit a canonical form: every number is a JSON float and a
``value`` payload is a bare number. A line already in that form is written
back byte for byte after parsing; any other valid line comes back equal
once its numbers are normalised.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Literal, Optional, Sequence, Tuple, Type, TypeVar, Union

import pandas as pd
import pydantic
from pydantic import BaseModel, ConfigDict, Field

from backend.errors import IoError, ParseError, ValidationError
from backend.metrics import MetricsReport
from backend.models import (
    BBox,
    CalibrationGrid,
    CorrectionThresholds,
    DialDetection,
    GroundTruth,
    MeterObservation,
    Payload,
    PayloadKind,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
RecordT = TypeVar('RecordT', bound=BaseModel)


class _Record(BaseModel):
    model_config = ConfigDict(strict=True, extra='forbid', allow_inf_nan=False)


class PayloadRecord(_Record):
    kind: Literal['class_scores', 'value', 'sincos']
    data: Union[float, List[float]]


class DialRecord(_Record):
    bbox: List[float] = Field(min_length=4, max_length=4)
    payload: PayloadRecord
    confidence: float
    aux_payload: Optional[PayloadRecord] = None


class DetectionRecord(_Record):
    image_id: str
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    dials: List[DialRecord]


class GroundTruthDialRecord(_Record):
    bbox: List[float] = Field(min_length=4, max_length=4)
    value: float


class GroundTruthRecord(_Record):
    image_id: str
    reading: str
    dials: List[GroundTruthDialRecord] = Field(default_factory=list)


class PredictionRecord(BaseModel):
    """A predictions-file line; ground-truth-style lines are accepted too."""
    model_config = ConfigDict(strict=True, extra='ignore', allow_inf_nan=False)

    image_id: str
    reading: Optional[str] = None
    error: Optional[str] = None
    digits: Optional[str] = None


class ThresholdsRecord(_Record):
    carry_up_cur_frac_min: float
    carry_up_next_val_max: float
    carry_down_cur_frac_max: float
    carry_down_next_val_min: float
    carry_up_enabled: bool = True
    carry_down_enabled: bool = True


class GridRecord(_Record):
    carry_up_cur_frac_min: List[float]
    carry_up_next_val_max: List[float]
    carry_down_cur_frac_max: List[float]
    carry_down_next_val_min: List[float]


@dataclass
class Prediction:
    """One predictions-file line: the digits read, or the partial digits of a failed read."""
    image_id: str
    digits: str
    failed: bool = False


def format_location(loc: Sequence[Union[str, int]]) -> str:
    """Render a pydantic error location as ``dials[0].bbox``."""
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def _join(prefix: str, path: str) -> str:
    if not path:
        return prefix
    return f"{prefix}.{path}" if prefix else path


def _validate_line(model: Type[RecordT], text: str, line: int) -> RecordT:
    try:
        return model.model_validate_json(text)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        if first['type'] == 'json_invalid':
            raise ParseError(f"malformed JSON: {first['msg']}", line=line) from None
        raise ValidationError(first['msg'], path=format_location(first['loc']), line=line) from None


def _iter_lines(path: PathLike) -> Iterator[Tuple[int, str]]:
    """Non-blank lines of a text file with their 1-based numbers."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            for number, text in enumerate(f, start=1):
                if text.strip():
                    yield number, text
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not valid UTF-8: {e.reason}") from e


def _write_text(path: PathLike, text: str) -> None:
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}") from e


def _jsonl(records: Iterable[Dict[str, Any]]) -> str:
    return ''.join(json.dumps(record, ensure_ascii=False, allow_nan=False) + '\n' for record in records)


def write_jsonl(records: Iterable[Dict[str, Any]], path: PathLike) -> int:
    """Write records as JSON Lines; returns the number written."""
    records = list(records)
    try:
        text = _jsonl(records)
    except ValueError as e:
        raise ValidationError(f"record holds a non-finite number: {e}") from e
    _write_text(path, text)
    logger.info(f"Wrote {len(records)} records to {path}")
    return len(records)


def _box(values: Sequence[float], path: str, line: int) -> BBox:
    try:
        return BBox(*(float(v) for v in values))
    except ValidationError as e:
        raise ValidationError(e.message, path=_join(path, e.path), line=line) from None


def _payload(record: PayloadRecord, path: str, line: int) -> Payload:
    try:
        return Payload.from_dict(record.model_dump())
    except ValidationError as e:
        raise ValidationError(e.message, path=_join(path, e.path), line=line) from None


def _clamp(box: BBox, width: float, height: float) -> BBox:
    return BBox.from_corners(max(0.0, box.x1), max(0.0, box.y1), min(width, box.x2), min(height, box.y2))


def _observation(record: DetectionRecord, line: int) -> MeterObservation:
    dials = []
    warnings = []
    for index, dial in enumerate(record.dials):
        prefix = f"dials[{index}]"
        box = _box(dial.bbox, f"{prefix}.bbox", line)
        inside = box.x1 >= 0 and box.y1 >= 0 and box.x2 <= record.width and box.y2 <= record.height
        if not inside:
            try:
                box = _clamp(box, record.width, record.height)
            except ValidationError:
                raise ValidationError("box lies outside the image", path=f"{prefix}.bbox", line=line) from None
            warnings.append(f"{prefix}.bbox clamped to the image bounds")
        if not 0 <= dial.confidence <= 1:
            raise ValidationError(f"must lie in [0, 1], got {dial.confidence}", path=f"{prefix}.confidence", line=line)
        payload = _payload(dial.payload, f"{prefix}.payload", line)
        aux = _payload(dial.aux_payload, f"{prefix}.aux_payload", line) if dial.aux_payload else None
        if aux is not None and aux.kind is PayloadKind.CLASS_SCORES:
            raise ValidationError("auxiliary payload must be a regression output", path=f"{prefix}.aux_payload.kind", line=line)
        dials.append(DialDetection(box=box, payload=payload, confidence=float(dial.confidence), aux=aux))
    if warnings:
        logger.warning(f"{record.image_id} (line {line}): {len(warnings)} boxes clamped to the image bounds")
    return MeterObservation(
        image_id=record.image_id,
        width=float(record.width),
        height=float(record.height),
        dials=dials,
        warnings=warnings,
    )


def _check_unique(ids: Iterable[Tuple[int, str]]) -> None:
    seen = set()
    for line, image_id in ids:
        if image_id in seen:
            raise ValidationError(f"duplicate image id {image_id!r}", path="image_id", line=line)
        seen.add(image_id)


def parse_detections(path: PathLike) -> List[MeterObservation]:
    """
    Load a detections file.

    Args:
        path: JSON Lines file, one meter image per line

    Returns:
        Validated observations, boxes clamped to the image bounds
    """
    observations = []
    lines = []
    for line, text in _iter_lines(path):
        observations.append(_observation(_validate_line(DetectionRecord, text, line), line))
        lines.append(line)
    _check_unique(zip(lines, (o.image_id for o in observations)))
    logger.info(f"Loaded {len(observations)} observations from {path}")
    return observations


def write_detections(observations: Sequence[MeterObservation], path: PathLike) -> int:
    return write_jsonl((o.to_dict() for o in observations), path)


def parse_ground_truth(path: PathLike) -> List[GroundTruth]:
    """Load a ground-truth file; the per-dial block is optional."""
    annotations = []
    lines = []
    for line, text in _iter_lines(path):
        record = _validate_line(GroundTruthRecord, text, line)
        boxes = [_box(d.bbox, f"dials[{i}].bbox", line) for i, d in enumerate(record.dials)]
        try:
            annotations.append(GroundTruth(
                image_id=record.image_id,
                reading=record.reading,
                boxes=boxes,
                dial_values=[d.value for d in record.dials],
            ))
        except ValidationError as e:
            raise ValidationError(e.message, path=e.path, line=line) from None
        lines.append(line)
    _check_unique(zip(lines, (a.image_id for a in annotations)))
    logger.info(f"Loaded {len(annotations)} ground-truth records from {path}")
    return annotations


def write_ground_truth(annotations: Sequence[GroundTruth], path: PathLike) -> int:
    return write_jsonl((a.to_dict() for a in annotations), path)


def parse_predictions(path: PathLike) -> List[Prediction]:
    """
    Load predicted readings.

    Accepts the output of ``read`` (including error lines, whose partial
    digits are kept) as well as ground-truth-style files.
    """
    predictions = []
    lines = []
    for line, text in _iter_lines(path):
        record = _validate_line(PredictionRecord, text, line)
        if record.reading is not None:
            digits, failed = record.reading, False
        elif record.error is not None:
            digits, failed = record.digits or "", True
        else:
            raise ValidationError("record has neither a reading nor an error", path="reading", line=line)
        if digits and not digits.isdigit():
            raise ValidationError(f"expected a digit string, got {digits!r}", path="reading", line=line)
        if not failed and not digits:
            raise ValidationError("reading must not be empty", path="reading", line=line)
        predictions.append(Prediction(record.image_id, digits, failed))
        lines.append(line)
    _check_unique(zip(lines, (p.image_id for p in predictions)))
    logger.info(f"Loaded {len(predictions)} predictions from {path}")
    return predictions


def write_predictions(records: Iterable[Dict[str, Any]], path: PathLike) -> int:
    return write_jsonl(records, path)


def _check_finite(value: Any, path: str = "") -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise ValidationError(f"non-finite number {value}", path=path)
    if isinstance(value, dict):
        for key, item in value.items():
            _check_finite(item, _join(path, str(key)))
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            _check_finite(item, f"{path}[{index}]")


def _flatten(document: Dict[str, Any], prefix: str = "") -> List[Tuple[str, Any]]:
    rows = []
    for key in sorted(document):
        name = _join(prefix, str(key))
        value = document[key]
        if isinstance(value, dict):
            rows.extend(_flatten(value, name))
        elif value is not None:
            rows.append((name, value))
    return rows


def report_frame(report: MetricsReport) -> pd.DataFrame:
    """Two-column (metric, value) projection; sections are prefixed, e.g. ``tolerant_mrr.1``."""
    document = report.to_dict()
    scalars = [(key, document[key]) for key in sorted(document) if not isinstance(document[key], dict)]
    sections = [(key, document[key]) for key in sorted(document) if isinstance(document[key], dict)]
    rows = [(key, value) for key, value in scalars if value is not None]
    for key, value in sections:
        rows.extend(_flatten(value, key))
    return pd.DataFrame(rows, columns=['metric', 'value'])


def write_report(report: MetricsReport, path: PathLike, fmt: str = "json") -> None:
    """
    Write a metrics report.

    Args:
        report: Report to write
        path: Destination file
        fmt: ``json`` or ``csv``
    """
    document = report.to_dict()
    _check_finite(document)
    if fmt == "json":
        _write_text(path, json.dumps(document, indent=2, sort_keys=True) + '\n')
    elif fmt == "csv":
        _write_text(path, report_frame(report).to_csv(index=False, lineterminator='\n'))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    logger.info(f"Wrote {fmt} report to {path}")


def _load_json(path: PathLike) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON in {path}: {e.msg}", line=e.lineno) from None


def read_report(path: PathLike) -> MetricsReport:
    document = _load_json(path)
    try:
        return MetricsReport.from_dict(document)
    except (KeyError, TypeError, AttributeError) as e:
        raise ValidationError(f"incomplete report: {e}") from None


def _validate_document(model: Type[RecordT], path: PathLike) -> RecordT:
    document = _load_json(path)
    try:
        return model.model_validate(document)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        raise ValidationError(first['msg'], path=format_location(first['loc'])) from None


def read_thresholds(path: PathLike) -> CorrectionThresholds:
    return CorrectionThresholds.from_dict(_validate_document(ThresholdsRecord, path).model_dump())


def write_json(document: Dict[str, Any], path: PathLike) -> None:
    """Write one JSON document with sorted keys."""
    _check_finite(document)
    _write_text(path, json.dumps(document, indent=2, sort_keys=True) + '\n')


def write_thresholds(thresholds: CorrectionThresholds, path: PathLike) -> None:
    write_json(thresholds.to_dict(), path)
    logger.info(f"Wrote thresholds {thresholds.as_tuple()} to {path}")


def read_grid(path: PathLike) -> CalibrationGrid:
    return CalibrationGrid.from_dict(_validate_document(GridRecord, path).model_dump())


def write_grid(grid: CalibrationGrid, path: PathLike) -> None:
    write_json(grid.to_dict(), path)
