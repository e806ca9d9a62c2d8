import itertools

import numpy as np
import pytest

from backend.correction import (
    calibrate,
    carry_direction,
    correct_dial,
    correct_sequence,
    correct_sequence_detailed,
    default_grid,
    display_value,
    oracle_calibrate,
)
from backend.dial_model import decompose_consumption, true_reading, value_to_digit
from backend.errors import EmptyCalibrationSet, ValidationError
from backend.models import CalibrationGrid, CorrectionThresholds
from backend.simulator import sample_consumption

DEFAULTS = CorrectionThresholds()


def test_carry_up_example():
    value, digit = correct_dial(3.9, 2.2, DEFAULTS)
    assert digit == 4
    assert value == pytest.approx(4.22)
    assert display_value(value) == pytest.approx(4.2)


def test_consistent_pair_is_left_alone():
    assert correct_dial(3.2, 2.2, DEFAULTS)[1] == 3
    assert carry_direction(3.2, 2.2, DEFAULTS) == 0


def test_carry_down_example():
    value, digit = correct_dial(4.1, 9.8, DEFAULTS)
    assert digit == 3
    assert value == pytest.approx(3.98)


def test_carry_up_wraps_past_nine():
    assert correct_dial(9.9, 0.2, DEFAULTS)[1] == 0


def test_sequence_example():
    assert correct_sequence([0.4, 4.1, 1.8, 3.9, 2.2], DEFAULTS) == [0, 4, 1, 4, 2]


def test_carries_cascade():
    result = correct_sequence_detailed([0.0, 3.9, 9.9, 0.2], DEFAULTS)
    assert result.digits == [0, 4, 0, 0]
    assert result.fired == 2


def test_integral_values_read_as_is():
    assert correct_sequence([1.0, 2.0, 3.0, 4.0], DEFAULTS) == [1, 2, 3, 4]


def test_empty_sequence():
    assert correct_sequence([], DEFAULTS) == []


def test_rightmost_dial_is_never_corrected():
    assert correct_sequence([0.0, 0.0, 0.0, 7.99], DEFAULTS)[-1] == 7


def test_disabled_thresholds_floor_every_dial(rng):
    disabled = CorrectionThresholds.disabled()
    for _ in range(500):
        values = list(rng.uniform(0, 10, size=5))
        assert correct_sequence(values, disabled) == [value_to_digit(v) for v in values]


def test_only_carry_up_enabled():
    t = CorrectionThresholds(carry_down_enabled=False)
    assert correct_sequence([4.1, 9.8, 0.0, 0.0], t)[0] == 4
    assert correct_sequence([3.9, 2.2, 0.0, 0.0], t)[0] == 4


def test_base_digits_override_floors():
    result = correct_sequence_detailed([3.9, 2.2, 0.0, 0.5], DEFAULTS, base_digits=[3, 1, 0, 0])
    assert result.digits == [4, 1, 0, 0]


def test_missing_values_fall_back_to_base_digits():
    result = correct_sequence_detailed([3.9, None, 0.2, 5.0], DEFAULTS, base_digits=[3, 7, 0, 5])
    assert result.digits == [3, 7, 0, 5]
    assert result.fired == 0


def test_missing_values_need_base_digits():
    with pytest.raises(ValueError):
        correct_sequence_detailed([1.0, None, 2.0, 3.0], DEFAULTS)


def _random_thresholds(rng):
    return CorrectionThresholds(
        float(rng.uniform(0.51, 0.99)), float(rng.uniform(0.01, 4.99)),
        float(rng.uniform(0.01, 0.49)), float(rng.uniform(5.01, 9.99)),
    )


def test_noise_free_values_never_fire(rng):
    for _ in range(2500):
        k = int(rng.integers(4, 6))
        consumption = sample_consumption(rng, k, boundary_weight=0.5)
        result = correct_sequence_detailed(decompose_consumption(consumption, k), _random_thresholds(rng))
        assert result.fired == 0
        assert ''.join(map(str, result.digits)) == true_reading(consumption, k)


def test_trigger_sets_are_monotone():
    loose = CorrectionThresholds(0.6, 4.0, 0.4, 6.0)
    strict = CorrectionThresholds(0.9, 1.0, 0.1, 9.0)
    currents = np.linspace(0.0, 9.99, 120)
    nexts = np.linspace(0.0, 9.99, 120)
    for cur, nxt in itertools.product(currents, nexts):
        if carry_direction(cur, nxt, strict):
            assert carry_direction(cur, nxt, loose) == carry_direction(cur, nxt, strict)


def test_thresholds_validate_ranges():
    with pytest.raises(ValidationError):
        CorrectionThresholds(carry_up_cur_frac_min=0.5)
    with pytest.raises(ValidationError):
        CorrectionThresholds(carry_down_next_val_min=10.0)


def _grid(**axes):
    defaults = dict(
        carry_up_cur_frac_min=[0.75], carry_up_next_val_max=[2.5],
        carry_down_cur_frac_max=[0.25], carry_down_next_val_min=[7.5],
    )
    defaults.update(axes)
    return CalibrationGrid(**defaults)


def test_calibrate_prefers_the_point_reading_more_meters():
    samples = [
        ([0.0, 0.0, 3.9, 0.5], "0040"),
        ([0.0, 0.0, 3.9, 1.5], "0041"),
        ([0.0, 0.0, 3.9, 2.0], "0042"),
        ([0.0, 0.0, 3.9, 3.0], "0043"),
        ([0.0, 0.0, 3.9, 4.5], "0044"),
    ]
    grid = _grid(carry_up_next_val_max=[1.0, 2.5])
    assert calibrate(samples, grid).carry_up_next_val_max == 2.5
    assert oracle_calibrate(samples, grid).carry_up_next_val_max == 2.5


def test_calibrate_ties_go_to_the_smallest_point():
    samples = [([0.4189, 4.189, 1.89, 8.9, 9.0], "04189"), ([1.0, 2.0, 3.0, 4.0], "1234")]
    grid = _grid(carry_up_cur_frac_min=[0.6, 0.8], carry_down_next_val_min=[6.0, 9.0])
    result = calibrate(samples, grid)
    assert result.as_tuple() == (0.6, 2.5, 0.25, 6.0)


def test_calibrate_keeps_enable_flags():
    samples = [([0.0, 0.0, 3.9, 0.5], "0040")]
    result = calibrate(samples, _grid(), carry_down_enabled=False)
    assert result.carry_up_enabled
    assert not result.carry_down_enabled


def test_calibrate_empty():
    with pytest.raises(EmptyCalibrationSet):
        calibrate([], default_grid())
    with pytest.raises(EmptyCalibrationSet):
        oracle_calibrate([], default_grid())


def test_calibrate_rejects_mismatched_truth():
    with pytest.raises(ValidationError):
        calibrate([([1.0, 2.0, 3.0, 4.0], "12345")], _grid())


def test_default_grid():
    grid = default_grid()
    assert grid.size() == 9 ** 4
    assert grid.carry_up_cur_frac_min[0] == 0.55
    assert grid.carry_down_next_val_min[-1] == 9.5


def _noisy_samples(rng, n):
    samples = []
    for _ in range(n):
        k = int(rng.integers(4, 6))
        consumption = sample_consumption(rng, k, boundary_weight=0.7)
        values = np.mod(np.asarray(decompose_consumption(consumption, k)) + rng.normal(0, 0.15, size=k), 10.0)
        values = [0.0 if v >= 10.0 else float(v) for v in values]
        samples.append((values, true_reading(consumption, k)))
    return samples


def _random_grid(rng):
    def axis(low, high):
        return sorted({round(float(x), 2) for x in rng.uniform(low, high, size=int(rng.integers(1, 5)))})
    return CalibrationGrid(axis(0.55, 0.95), axis(0.5, 4.5), axis(0.05, 0.45), axis(5.5, 9.5))


def test_calibrate_agrees_with_oracle(rng):
    for _ in range(100):
        samples = _noisy_samples(rng, 15)
        grid = _random_grid(rng)
        assert calibrate(samples, grid).as_tuple() == oracle_calibrate(samples, grid).as_tuple()
