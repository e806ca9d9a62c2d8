import json

import pytest

from backend import file_store
from backend.models import PayloadKind
from ui.cli import main


def _run(*argv):
    return main([str(a) for a in argv])


def _simulate(tmp_path, *extra, prefix="sim"):
    det, gt = tmp_path / f"{prefix}_det.jsonl", tmp_path / f"{prefix}_gt.jsonl"
    assert _run("simulate", "--out-detections", det, "--out-gt", gt, *extra) == 0
    return det, gt


def _last_stderr_line(capsys):
    return capsys.readouterr().err.strip().splitlines()[-1]


def test_simulate_is_deterministic(tmp_path):
    args = ("--count", 20, "--noise-sigma", 2.0, "--flip-prob", 0.1, "--dup-prob", 0.2, "--tilt-max", 30, "--seed", 5)
    first = _simulate(tmp_path, *args, prefix="a")
    second = _simulate(tmp_path, *args, prefix="b")
    assert first[0].read_bytes() == second[0].read_bytes()
    assert first[1].read_bytes() == second[1].read_bytes()


def test_noise_free_round_trip(tmp_path):
    det, gt = _simulate(tmp_path, "--count", 30, "--tilt-max", 30, "--seed", 1)
    pred, report = tmp_path / "pred.jsonl", tmp_path / "report.json"
    assert _run("read", "--detections", det, "--out", pred, "--tilt-threshold", 0) == 0
    assert _run("evaluate", "--pred", pred, "--gt", gt, "--out", report) == 0
    document = json.loads(report.read_text(encoding='utf-8'))
    assert document["mrr"] == 1.0
    assert document["n"] == 30


def test_pipeline_output_is_byte_identical(tmp_path):
    outputs = []
    for prefix in ("x", "y"):
        det, gt = _simulate(tmp_path, "--count", 25, "--noise-sigma", 3.6, "--boundary-weight", 0.9, "--seed", 7, prefix=prefix)
        pred, report = tmp_path / f"{prefix}_pred.jsonl", tmp_path / f"{prefix}_report.json"
        assert _run("read", "--detections", det, "--out", pred) == 0
        assert _run("evaluate", "--pred", pred, "--gt", gt, "--out", report, "--seed", 7) == 0
        outputs.append((pred.read_bytes(), report.read_bytes()))
    assert outputs[0] == outputs[1]


def test_evaluate_fixture(tmp_path, fixtures_dir):
    out = tmp_path / "report.json"
    code = _run("evaluate", "--pred", fixtures_dir / "eval_pred.jsonl", "--gt", fixtures_dir / "eval_gt.jsonl",
                "--tolerance", 100, "--tariff", 0.5, "--out", out)
    assert code == 0
    report = json.loads(out.read_text(encoding='utf-8'))
    assert report["n"] == 10
    assert report["mrr"] == pytest.approx(0.5)
    assert report["drr"] == pytest.approx(0.8)
    assert report["mae"] == pytest.approx(2882.6)
    assert report["cost"] == pytest.approx(1441.3)
    assert report["tolerant_mrr"] == pytest.approx({"0": 0.5, "1": 0.7, "100": 0.8})
    assert report["position_errors"] == pytest.approx({"1": 0.125, "2": 0.125, "3": 0.25, "4": 0.375, "5": 0.125})
    assert report["magnitude_histogram"] == {"1": 2, "2-9": 0, "10-99": 1, "100-999": 1, "1000+": 1}
    assert report["unequal_length_count"] == 1
    assert report["error_kinds"] == {"neighboring": 6, "symmetry": 1, "other": 1, "length": 1}
    assert report["config"]["tolerances"] == [0, 1, 100]
    assert report["config"]["missing_predictions"] == 0


def test_evaluate_csv(tmp_path, fixtures_dir):
    out = tmp_path / "report.csv"
    assert _run("evaluate", "--pred", fixtures_dir / "eval_pred.jsonl", "--gt", fixtures_dir / "eval_gt.jsonl",
                "--out", out, "--format", "csv") == 0
    lines = out.read_text(encoding='utf-8').splitlines()
    assert lines[0] == "metric,value"
    assert sum(line.startswith("mrr,") for line in lines) == 1


def test_evaluate_counts_missing_predictions(tmp_path, fixtures_dir):
    pred = tmp_path / "pred.jsonl"
    pred.write_text(''.join(fixtures_dir.joinpath("eval_pred.jsonl").read_text(encoding='utf-8').splitlines(True)[:8]),
                    encoding='utf-8')
    out = tmp_path / "report.json"
    assert _run("evaluate", "--pred", pred, "--gt", fixtures_dir / "eval_gt.jsonl", "--out", out) == 0
    report = json.loads(out.read_text(encoding='utf-8'))
    assert report["n"] == 8
    assert report["config"]["missing_predictions"] == 2


def test_read_fails_on_three_dials(tmp_path, make_observation, capsys):
    det = tmp_path / "det.jsonl"
    file_store.write_detections([
        make_observation([1.0, 2.0, 3.0, 4.0], image_id="ok"),
        make_observation([1.0, 2.0, 3.0], image_id="short"),
    ], det)
    pred = tmp_path / "pred.jsonl"
    assert _run("read", "--detections", det, "--out", pred) == 1
    line = _last_stderr_line(capsys)
    assert line.startswith("error: UnsupportedDialCount")
    assert "short" in line
    records = [json.loads(text) for text in pred.read_text(encoding='utf-8').splitlines()]
    assert records[0]["reading"] == "1234"
    assert records[1]["error"] == "UnsupportedDialCount"


def test_malformed_input(tmp_path, capsys):
    det = tmp_path / "det.jsonl"
    det.write_text('{"image_id": "a", "width": 10\n', encoding='utf-8')
    assert _run("read", "--detections", det, "--out", tmp_path / "pred.jsonl") == 1
    assert _last_stderr_line(capsys).startswith("error: ParseError: line 1")


def test_missing_input_file(tmp_path, capsys):
    assert _run("read", "--detections", tmp_path / "nope.jsonl", "--out", tmp_path / "pred.jsonl") == 1
    assert _last_stderr_line(capsys).startswith("error: IoError")


def test_usage_errors():
    assert main([]) == 2
    assert main(["read"]) == 2
    assert main(["simulate", "--count", "x", "--out-detections", "a", "--out-gt", "b"]) == 2


def test_invalid_option_values_exit_with_one(tmp_path, capsys):
    det = tmp_path / "det.jsonl"
    gt = tmp_path / "gt.jsonl"
    assert _run("simulate", "--count", 2, "--tilt-max", 60, "--out-detections", det, "--out-gt", gt) == 1
    assert _last_stderr_line(capsys).startswith("error: ValidationError")


def test_calibrate_then_read(tmp_path):
    det, gt = _simulate(tmp_path, "--count", 60, "--noise-sigma", 3.6, "--boundary-weight", 0.9, "--seed", 3)
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({
        "carry_up_cur_frac_min": [0.7, 0.8],
        "carry_up_next_val_max": [2.0, 3.0],
        "carry_down_cur_frac_max": [0.2, 0.3],
        "carry_down_next_val_min": [7.0, 8.0],
    }), encoding='utf-8')
    thresholds = tmp_path / "thresholds.json"
    assert _run("calibrate", "--detections", det, "--gt", gt, "--grid", grid, "--out", thresholds) == 0
    calibrated = file_store.read_thresholds(thresholds)
    assert calibrated.carry_up_cur_frac_min in (0.7, 0.8)
    assert calibrated.carry_down_next_val_min in (7.0, 8.0)
    pred = tmp_path / "pred.jsonl"
    assert _run("read", "--detections", det, "--thresholds", thresholds, "--out", pred) == 0


def test_calibrate_with_carry_up_only(tmp_path):
    det, gt = _simulate(tmp_path, "--count", 20, "--noise-sigma", 2.0, "--seed", 8)
    out = tmp_path / "thresholds.json"
    assert _run("calibrate", "--detections", det, "--gt", gt, "--no-carry-down", "--out", out,
                "--grid", _write_grid(tmp_path)) == 0
    assert not file_store.read_thresholds(out).carry_down_enabled


def _write_grid(tmp_path):
    path = tmp_path / "small_grid.json"
    path.write_text(json.dumps({
        "carry_up_cur_frac_min": [0.75],
        "carry_up_next_val_max": [2.5],
        "carry_down_cur_frac_max": [0.25],
        "carry_down_next_val_min": [7.5],
    }), encoding='utf-8')
    return path


def test_detect_eval_on_perfect_detections(tmp_path):
    det, gt = _simulate(tmp_path, "--count", 15, "--payload", PayloadKind.CLASS_SCORES.value, "--seed", 2)
    out = tmp_path / "map.json"
    assert _run("detect-eval", "--detections", det, "--gt", gt, "--out", out) == 0
    document = json.loads(out.read_text(encoding='utf-8'))
    assert document["map"] == pytest.approx(1.0)
    assert document["iou_threshold"] == 0.5


def test_hybrid_read(tmp_path):
    det, gt = _simulate(tmp_path, "--count", 15, "--payload", "class_scores", "--aux-payload", "sincos", "--seed", 4)
    pred, report = tmp_path / "pred.jsonl", tmp_path / "report.json"
    assert _run("read", "--detections", det, "--mode", "hybrid", "--out", pred) == 0
    assert _run("evaluate", "--pred", pred, "--gt", gt, "--mode", "hybrid", "--out", report) == 0
    document = json.loads(report.read_text(encoding='utf-8'))
    assert document["mrr"] == 1.0
    assert document["config"]["mode"] == "hybrid"


def test_check(tmp_path):
    current, previous = tmp_path / "now.jsonl", tmp_path / "before.jsonl"
    current.write_text('{"image_id": "a", "reading": "0005"}\n{"image_id": "b", "reading": "0500"}\n', encoding='utf-8')
    previous.write_text('{"image_id": "a", "reading": "9990"}\n{"image_id": "b", "reading": "1000"}\n', encoding='utf-8')
    out = tmp_path / "check.jsonl"
    assert _run("check", "--pred", current, "--previous", previous, "--out", out) == 0
    results = [json.loads(line) for line in out.read_text(encoding='utf-8').splitlines()]
    assert results == [
        {"image_id": "a", "verdict": "rollover", "consumed": 15},
        {"image_id": "b", "verdict": "decreased", "consumed": None},
    ]
