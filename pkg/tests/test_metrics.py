import itertools
from functools import lru_cache

import pytest

from backend.errors import EmptyEvaluationSet, ShapeMismatch, ValidationError
from backend.metrics import (
    ErrorKind,
    MetricsReport,
    ReadingPair,
    billing_cost,
    classify_error,
    drr,
    error_kind_distribution,
    error_position_distribution,
    evaluate,
    levenshtein,
    mae,
    magnitude_bucket,
    magnitude_histogram,
    mrr,
    mse,
    pairs_frame,
    rmse,
    tolerant_mrr,
)


def _pairs(*items):
    return [ReadingPair(pred, gt) for pred, gt in items]


def test_exact_match():
    pairs = _pairs(("04189", "04189"))
    assert mrr(pairs) == 1.0
    assert drr(pairs) == 1.0
    assert mae(pairs) == 0.0


def test_single_dial_error():
    pairs = _pairs(("04199", "04189"))
    assert mrr(pairs) == 0.0
    assert drr(pairs) == pytest.approx(0.8)
    assert mae(pairs) == 10.0
    assert error_position_distribution(pairs) == {4: 1.0}


def test_magnitude_bucket_example():
    pairs = _pairs(("04290", "04189"))
    assert mae(pairs) == 101.0
    assert magnitude_histogram(pairs)["100-999"] == 1


@pytest.mark.parametrize("error, label", [
    (0, None), (1, "1"), (2, "2-9"), (9, "2-9"), (10, "10-99"), (999, "100-999"), (1000, "1000+"), (10 ** 6, "1000+"),
])
def test_magnitude_bucket(error, label):
    assert magnitude_bucket(error) == label


def test_unequal_lengths_count_in_drr_but_not_positions():
    pairs = _pairs(("3141", "31415"))
    assert drr(pairs) == pytest.approx(0.8)
    assert error_position_distribution(pairs) == {}
    assert classify_error("3141", "31415") == [ErrorKind.LENGTH]


def test_tolerant_mrr():
    pairs = _pairs(("0100", "0101"), ("0100", "0100"), ("0100", "0110"))
    assert tolerant_mrr(pairs, 0) == pytest.approx(1 / 3)
    assert tolerant_mrr(pairs, 1) == pytest.approx(2 / 3)
    assert tolerant_mrr(pairs, 10) == 1.0
    with pytest.raises(ValueError):
        tolerant_mrr(pairs, -1)


def test_tolerant_mrr_at_zero_equals_mrr(rng):
    for _ in range(50):
        pairs = [
            ReadingPair(''.join(map(str, rng.integers(0, 10, size=4))), ''.join(map(str, rng.integers(0, 10, size=4))))
            for _ in range(20)
        ]
        pairs += _pairs(("1234", "1234"))
        assert tolerant_mrr(pairs, 0) == mrr(pairs)


def test_classify_error_kinds():
    assert classify_error("04199", "04189") == [ErrorKind.NEIGHBORING]
    assert classify_error("0490", "0409") == [ErrorKind.NEIGHBORING, ErrorKind.NEIGHBORING]
    assert classify_error("0470", "0420") == [ErrorKind.SYMMETRY]
    assert classify_error("0450", "0410") == [ErrorKind.OTHER]
    # 4 against 5 is both adjacent and mirrored; adjacency wins
    assert classify_error("0040", "0050") == [ErrorKind.NEIGHBORING]
    assert classify_error("1234", "1234") == []


def test_error_kind_distribution():
    pairs = _pairs(("0470", "0420"), ("0001", "0000"), ("123", "1234"))
    assert error_kind_distribution(pairs) == {"neighboring": 1, "symmetry": 1, "other": 0, "length": 1}


def test_empty_inputs():
    for metric in (mrr, drr, mae, magnitude_histogram, error_position_distribution, evaluate):
        with pytest.raises(EmptyEvaluationSet):
            metric([])


def test_pairs_reject_non_digits():
    with pytest.raises(ValidationError):
        ReadingPair("04a89", "04189")
    with pytest.raises(ValidationError):
        ReadingPair("", "04189")


def test_mse_examples():
    assert mse([1, 2], [1, 2]) == 0.0
    assert mse([0], [3]) == 9.0
    assert rmse([0, 0], [3, 3]) == 3.0
    with pytest.raises(ShapeMismatch):
        mse([1, 2], [1])
    with pytest.raises(EmptyEvaluationSet):
        mse([], [])


@lru_cache(maxsize=None)
def _reference_distance(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        _reference_distance(a[1:], b) + 1,
        _reference_distance(a, b[1:]) + 1,
        _reference_distance(a[1:], b[1:]) + (a[0] != b[0]),
    )


def test_levenshtein_matches_reference():
    alphabet = "012"
    strings = [''.join(s) for n in range(5) for s in itertools.product(alphabet, repeat=n)]
    for a in strings:
        for b in strings:
            assert levenshtein(a, b) == _reference_distance(a, b)


def _random_pairs(rng, n):
    pairs = []
    for _ in range(n):
        gt = ''.join(map(str, rng.integers(0, 10, size=int(rng.integers(4, 6)))))
        if rng.random() < 0.5:
            pred = gt
        else:
            pred = ''.join(map(str, rng.integers(0, 10, size=int(rng.integers(4, 6)))))
        pairs.append(ReadingPair(pred, gt))
    return pairs


def test_metric_ranges(rng):
    for _ in range(50):
        pairs = _random_pairs(rng, 30)
        assert 0 <= mrr(pairs) <= drr(pairs) <= 1
        assert mae(pairs) >= 0
        positions = error_position_distribution(pairs)
        if positions:
            assert sum(positions.values()) == pytest.approx(1.0)
        wrong = sum(p.pred != p.gt for p in pairs)
        assert sum(magnitude_histogram(pairs).values()) == wrong


def test_evaluate_is_order_independent(rng):
    pairs = _random_pairs(rng, 200)
    shuffled = [pairs[i] for i in rng.permutation(len(pairs))]
    assert evaluate(pairs, (0, 1, 100)).to_dict() == evaluate(shuffled, (0, 1, 100)).to_dict()


def test_evaluate_report():
    pairs = _pairs(("04189", "04189"), ("04199", "04189"))
    report = evaluate(pairs, tolerances=(0, 10), tariff_per_kwh=0.3)
    assert report.n_meters == 2
    assert report.mrr == 0.5
    assert report.tolerant_mrr == {0: 0.5, 10: 1.0}
    assert report.cost == pytest.approx(1.5)
    assert billing_cost(report, 2.0) == pytest.approx(10.0)
    document = report.to_dict()
    assert set(document) == {
        'n', 'mrr', 'drr', 'mae', 'tolerant_mrr', 'position_errors', 'magnitude_histogram',
        'unequal_length_count', 'error_kinds', 'cost', 'config',
    }
    assert MetricsReport.from_dict(document) == report


def test_pairs_frame():
    frame = pairs_frame(_pairs(("04189", "04189"), ("04199", "04189")))
    assert list(frame['exact']) == [True, False]
    assert list(frame['abs_error']) == [0, 10]
    assert frame.loc[1, 'error_kinds'] == "neighboring"
