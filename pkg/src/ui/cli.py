"""
Command-line interface.

    simulate     write synthetic detections and ground truth
    read         assemble readings from a detections file
    calibrate    search carry-correction thresholds on annotated detections
    evaluate     score predicted readings against ground truth
    detect-eval  mean AP of per-dial digit detections
    check        flag readings that are implausible against previous ones

Every command returns 0 on success, 1 when the data is invalid and 2 on a
usage error. The last line written to stderr on failure has the form
``error: <Kind>: <message>``.
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from backend import file_store
from backend.correction import calibrate, default_grid
from backend.detection_metrics import DetectionScene, LabeledBox, ScoredBox, mean_ap
from backend.dial_model import value_to_digit
from backend.errors import DialMeterError, EmptyCalibrationSet, EmptyEvaluationSet, ValidationError
from backend.metrics import ReadingPair, evaluate
from backend.models import CorrectionThresholds, GroundTruth, MeterObservation, PayloadKind, PipelineMode
from backend.plausibility import check_batch
from backend.simulator import BatchConfig, NoiseModel, generate_batch
from config import Config
from reader.reading_pipeline import PipelineOptions, ReadingPipeline, argmax_digit

load_dotenv()

logger = logging.getLogger(__name__)

MODES = [m.value for m in PipelineMode]


def _error_line(error: DialMeterError) -> str:
    message = ' '.join(str(error).split())
    return f"error: {error.kind}: {message}"


def _thresholds(path: Optional[str]) -> CorrectionThresholds:
    return file_store.read_thresholds(path) if path else CorrectionThresholds()


def cmd_simulate(args: argparse.Namespace) -> int:
    noise = NoiseModel(
        angle_sigma=args.noise_sigma,
        flip_prob=args.flip_prob,
        drop_prob=args.drop_prob,
        dup_prob=args.dup_prob,
        seed=args.seed,
    )
    config = BatchConfig(
        count=args.count,
        dials=args.dials,
        tilt_max=args.tilt_max,
        boundary_weight=args.boundary_weight,
        payload_kind=PayloadKind(args.payload),
        aux_kind=PayloadKind(args.aux_payload) if args.aux_payload else None,
        noise=noise,
    )
    samples = generate_batch(config)
    file_store.write_detections([s.observation for s in samples], args.out_detections)
    file_store.write_ground_truth([s.ground_truth() for s in samples], args.out_gt)
    return 0


def _pipeline(args: argparse.Namespace, thresholds: CorrectionThresholds, mode: PipelineMode) -> ReadingPipeline:
    options = PipelineOptions(
        tilt_threshold=args.tilt_threshold,
        cw_label_space=args.cw_label_space,
        rectify=not args.no_rectify,
    )
    return ReadingPipeline(mode, thresholds, options)


def cmd_read(args: argparse.Namespace) -> int:
    observations = file_store.parse_detections(args.detections)
    pipeline = _pipeline(args, _thresholds(args.thresholds), PipelineMode(args.mode))
    outcomes = pipeline.read_batch(observations)
    file_store.write_predictions((o.to_dict() for o in outcomes), args.out)
    failed = [o for o in outcomes if not o.ok]
    if failed:
        print(f"{_error_line(failed[0].error)} ({len(failed)} of {len(outcomes)} records failed)", file=sys.stderr)
        return 1
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    observations = file_store.parse_detections(args.detections)
    truth = {gt.image_id: gt.reading for gt in file_store.parse_ground_truth(args.gt)}
    grid = file_store.read_grid(args.grid) if args.grid else default_grid()

    # Raw continuous values are read with correction off; calibration replays it.
    pipeline = _pipeline(args, CorrectionThresholds.disabled(), PipelineMode.REGRESSION)
    samples = []
    skipped = 0
    for outcome in pipeline.read_batch(observations):
        reading = outcome.reading
        gt = truth.get(outcome.image_id)
        if (reading is None or gt is None or len(gt) != len(reading.raw_values)
                or any(v is None for v in reading.raw_values)):
            skipped += 1
            continue
        samples.append((reading.raw_values, gt))
    if skipped:
        logger.warning(f"Skipped {skipped} records without usable continuous values or ground truth")
    if not samples:
        raise EmptyCalibrationSet("no record could be used for calibration")

    thresholds = calibrate(
        samples,
        grid,
        carry_up_enabled=not args.no_carry_up,
        carry_down_enabled=not args.no_carry_down,
    )
    file_store.write_thresholds(thresholds, args.out)
    return 0


def _pairs(predictions: Sequence[file_store.Prediction], truth: Sequence[GroundTruth]) -> Tuple[List[ReadingPair], int, int]:
    by_id = {p.image_id: p for p in predictions}
    pairs: List[ReadingPair] = []
    missing = failed = 0
    for gt in truth:
        prediction = by_id.get(gt.image_id)
        if prediction is None or not prediction.digits:
            missing += 1
            continue
        failed += prediction.failed
        pairs.append(ReadingPair(pred=prediction.digits, gt=gt.reading))
    return pairs, missing, failed


def cmd_evaluate(args: argparse.Namespace) -> int:
    predictions = file_store.parse_predictions(args.pred)
    truth = file_store.parse_ground_truth(args.gt)
    pairs, missing, failed = _pairs(predictions, truth)
    if missing:
        logger.warning(f"{missing} ground-truth records have no usable prediction and are left out")
    if not pairs:
        raise EmptyEvaluationSet("no prediction matches a ground-truth record")

    tolerances = sorted(set(Config.DEFAULT_TOLERANCES) | set(args.tolerance or []))
    if any(t < 0 for t in tolerances):
        raise ValidationError("tolerances must be non-negative", path="tolerance")
    report = evaluate(pairs, tolerances, tariff_per_kwh=args.tariff)
    report.config = {
        'mode': args.mode,
        'seed': args.seed,
        'thresholds': _thresholds(args.thresholds).to_dict() if args.thresholds else None,
        'tolerances': tolerances,
        'tariff': args.tariff,
        'missing_predictions': missing,
        'failed_predictions': failed,
    }
    file_store.write_report(report, args.out, args.format)
    return 0


def detection_scenes(observations: Sequence[MeterObservation], truth: Sequence[GroundTruth]) -> List[DetectionScene]:
    """Pair class-score detections with per-dial ground-truth boxes, image by image."""
    by_id = {gt.image_id: gt for gt in truth}
    scenes = []
    for obs in observations:
        gt = by_id.get(obs.image_id)
        if gt is None or not gt.boxes:
            continue
        predictions = [
            ScoredBox(d.box, argmax_digit(d.payload), d.confidence)
            for d in obs.dials if d.payload.kind is PayloadKind.CLASS_SCORES
        ]
        labels = [LabeledBox(box, value_to_digit(v)) for box, v in zip(gt.boxes, gt.dial_values)]
        scenes.append(DetectionScene(obs.image_id, predictions, labels))
    return scenes


def cmd_detect_eval(args: argparse.Namespace) -> int:
    observations = file_store.parse_detections(args.detections)
    truth = file_store.parse_ground_truth(args.gt)
    per_class, m_ap = mean_ap(detection_scenes(observations, truth), args.iou)
    document = {
        'ap': {str(cls): ap for cls, ap in sorted(per_class.items())},
        'iou_threshold': args.iou,
        'map': m_ap,
    }
    file_store.write_json(document, args.out)
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    current = {p.image_id: p.digits for p in file_store.parse_predictions(args.pred) if not p.failed}
    previous = {p.image_id: int(p.digits) for p in file_store.parse_predictions(args.previous) if not p.failed}
    results = check_batch(current, previous, args.max_daily_kwh, args.days)
    file_store.write_jsonl((r.to_dict() for r in results), args.out)
    return 0


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--tilt-threshold', type=float, default=Config.TILT_THRESHOLD_DEG,
                        help='Rectify counters tilted by more than this many degrees')
    parser.add_argument('--cw-label-space', action='store_true',
                        help='Class scores of counterclockwise dials use mirrored labels')
    parser.add_argument('--no-rectify', action='store_true', help='Never rectify tilted counters')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='dialmeter', description='Multi-dial meter reading toolkit')
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Generate synthetic meters')
    simulate.add_argument('--count', type=int, required=True)
    simulate.add_argument('--dials', choices=['4', '5', 'mixed'], default='mixed')
    simulate.add_argument('--noise-sigma', type=float, default=0.0, help='Pointer angle noise, degrees')
    simulate.add_argument('--flip-prob', type=float, default=0.0)
    simulate.add_argument('--drop-prob', type=float, default=0.0)
    simulate.add_argument('--dup-prob', type=float, default=0.0)
    simulate.add_argument('--tilt-max', type=float, default=0.0)
    simulate.add_argument('--boundary-weight', type=float, default=0.0)
    simulate.add_argument('--payload', choices=[k.value for k in PayloadKind], default=PayloadKind.SINCOS.value)
    simulate.add_argument('--aux-payload', choices=[PayloadKind.VALUE.value, PayloadKind.SINCOS.value])
    simulate.add_argument('--seed', type=int, default=0)
    simulate.add_argument('--out-detections', required=True)
    simulate.add_argument('--out-gt', required=True)
    simulate.set_defaults(handler=cmd_simulate)

    read = commands.add_parser('read', help='Assemble readings from detections')
    read.add_argument('--detections', required=True)
    read.add_argument('--mode', choices=MODES, default=PipelineMode.REGRESSION.value)
    read.add_argument('--thresholds', help='Threshold JSON; built-in defaults when omitted')
    read.add_argument('--out', required=True)
    _add_pipeline_flags(read)
    read.set_defaults(handler=cmd_read)

    calib = commands.add_parser('calibrate', help='Search correction thresholds')
    calib.add_argument('--detections', required=True)
    calib.add_argument('--gt', required=True)
    calib.add_argument('--grid', help='Grid JSON; the default lattice when omitted')
    calib.add_argument('--no-carry-up', action='store_true')
    calib.add_argument('--no-carry-down', action='store_true')
    calib.add_argument('--out', required=True)
    _add_pipeline_flags(calib)
    calib.set_defaults(handler=cmd_calibrate)

    evaluate_cmd = commands.add_parser('evaluate', help='Score predictions against ground truth')
    evaluate_cmd.add_argument('--pred', required=True)
    evaluate_cmd.add_argument('--gt', required=True)
    evaluate_cmd.add_argument('--tolerance', type=int, action='append',
                              help='Extra kWh tolerance (repeatable); 0 and 1 are always reported')
    evaluate_cmd.add_argument('--tariff', type=float, help='Price per kWh for the billing error')
    evaluate_cmd.add_argument('--out', required=True)
    evaluate_cmd.add_argument('--format', choices=['json', 'csv'], default='json')
    evaluate_cmd.add_argument('--mode', choices=MODES, help='Echoed into the report')
    evaluate_cmd.add_argument('--thresholds', help='Echoed into the report')
    evaluate_cmd.add_argument('--seed', type=int, default=0, help='Echoed into the report')
    evaluate_cmd.set_defaults(handler=cmd_evaluate)

    detect = commands.add_parser('detect-eval', help='Mean AP of class-score detections')
    detect.add_argument('--detections', required=True)
    detect.add_argument('--gt', required=True)
    detect.add_argument('--iou', type=float, default=0.5)
    detect.add_argument('--out', required=True)
    detect.set_defaults(handler=cmd_detect_eval)

    check = commands.add_parser('check', help='Flag implausible readings')
    check.add_argument('--pred', required=True)
    check.add_argument('--previous', required=True, help='Earlier readings of the same meters')
    check.add_argument('--days', type=float, default=1.0)
    check.add_argument('--max-daily-kwh', type=float, default=Config.MAX_DAILY_KWH)
    check.add_argument('--out', required=True)
    check.set_defaults(handler=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    logging.basicConfig(
        level=Config.log_level(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except DialMeterError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(_error_line(e), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
