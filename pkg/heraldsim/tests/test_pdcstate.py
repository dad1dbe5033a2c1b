import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heraldsim.exceptions import ModeCountError, UndefinedMetricError
from heraldsim.pdcstate import (MAX_ENUMERATED_MODES, OccupationPattern, SqueezerBank,
                                calibrate_pump_factor, count_patterns, enumerate_patterns,
                                family_count_distribution, mean_pair_number,
                                pattern_tail_bound, pattern_tail_weight, squeezer_bank,
                                sum_pattern_weights, unconditional_g2)
from heraldsim.spectra import FilteredSchmidt

FILTERED = FilteredSchmidt([0.9, 0.3], [0.3])
TWO_MODES = SqueezerBank([0.3, 0.1])
THREE_MODES = SqueezerBank([0.4, 0.2], [0.3])

q_families = st.lists(st.floats(0.0, 0.6), min_size=1, max_size=4).map(
    lambda values: sorted(values, reverse=True))


def test_squeezer_bank_scales_coefficients():
    bank = squeezer_bank(FILTERED, 0.5)
    np.testing.assert_allclose(bank.q_t, [0.45, 0.15])
    np.testing.assert_allclose(bank.q_r, [0.15])
    assert bank.B == 0.5
    assert bank.mode_count == 3
    np.testing.assert_array_equal(bank.schmidt_t, FILTERED.transmitted)


@pytest.mark.parametrize("B", [-0.1, np.inf, np.nan])
def test_squeezer_bank_bad_pump_factor(B):
    with pytest.raises(ValueError):
        squeezer_bank(FILTERED, B)


@pytest.mark.parametrize("q_t, q_r", [
    ([0.1, 0.2], []),
    ([-0.1], []),
    ([0.1], [0.1, np.nan]),
])
def test_squeezer_bank_validation(q_t, q_r):
    with pytest.raises(ValueError):
        SqueezerBank(q_t, q_r)


def test_bank_text_form():
    bank = squeezer_bank(FILTERED, 0.25)
    assert SqueezerBank.from_dict(bank.as_dict()) == bank
    empty = SqueezerBank([0.2])
    assert empty.as_dict()["q_r"] == ""
    assert SqueezerBank.from_dict(empty.as_dict()) == empty


def test_vacuum_probability():
    expected = np.prod(1 / np.cosh([0.4, 0.2, 0.3]) ** 2)
    assert THREE_MODES.vacuum_probability == pytest.approx(expected, rel=1e-14)


def test_mean_pair_number():
    assert mean_pair_number(THREE_MODES) == pytest.approx(
        np.sum(np.sinh([0.4, 0.2, 0.3]) ** 2), rel=1e-14)


@pytest.mark.parametrize("target", [1e-3, 1e-2, 0.1, 2.0])
def test_calibrate_pump_factor(target):
    B = calibrate_pump_factor(FILTERED, target)
    assert mean_pair_number(squeezer_bank(FILTERED, B)) == pytest.approx(target, rel=1e-12)


@pytest.mark.parametrize("target", [0.0, -1.0, np.inf])
def test_calibrate_pump_factor_bad_target(target):
    with pytest.raises(ValueError):
        calibrate_pump_factor(FILTERED, target)


def test_calibrate_pump_factor_empty_source():
    with pytest.raises(ValueError):
        calibrate_pump_factor(FilteredSchmidt([], []), 0.1)


def test_enumerate_patterns_count_and_order():
    patterns = list(enumerate_patterns(THREE_MODES, 4))
    assert len(patterns) == count_patterns(3, 4) == math.comb(7, 3)
    assert patterns[0].pattern == OccupationPattern((0, 0), (0,))
    assert patterns[0].weight == pytest.approx(THREE_MODES.vacuum_probability)
    counts = [item.pattern.transmitted + item.pattern.reflected for item in patterns]
    assert counts == sorted(counts)
    assert all(item.pattern.n_tot <= 4 for item in patterns)


def test_two_mode_pattern_sum_matches_geometric_series():
    mu = np.tanh([0.3, 0.1]) ** 2
    expected = math.fsum((1 - mu[0]) * mu[0] ** n1 * (1 - mu[1]) * mu[1] ** n2
                         for n1 in range(7) for n2 in range(7 - n1))
    total = sum_pattern_weights(enumerate_patterns(TWO_MODES, 6))
    assert total == pytest.approx(expected, rel=1e-13)
    assert total >= 0.9999


def test_enumerate_patterns_mode_limit():
    bank = SqueezerBank(np.full(MAX_ENUMERATED_MODES + 1, 0.01))
    with pytest.raises(ModeCountError):
        next(enumerate_patterns(bank, 2))


def test_family_distribution_groups_patterns():
    grouped = defaultdict(list)
    for item in enumerate_patterns(THREE_MODES, 5):
        grouped[item.pattern.n_tot].append(item.weight)
    expected = [math.fsum(grouped[n]) for n in range(6)]
    np.testing.assert_allclose(family_count_distribution(THREE_MODES.q, 5), expected,
                               rtol=1e-12)


def test_family_distribution_single_mode_is_geometric():
    mu = np.tanh(0.5) ** 2
    np.testing.assert_allclose(family_count_distribution([0.5], 8),
                               (1 - mu) * mu ** np.arange(9), rtol=1e-12)


def test_family_distribution_negative_n_max():
    with pytest.raises(ValueError):
        family_count_distribution([0.1], -1)


@settings(max_examples=40, deadline=None)
@given(q_t=q_families, n_max=st.integers(1, 8))
def test_tail_bound_dominates_tail(q_t, n_max):
    bank = SqueezerBank(q_t)
    assert pattern_tail_bound(bank, n_max) >= pattern_tail_weight(bank, n_max) - 1e-12


def test_tail_bound_of_vacuum():
    assert pattern_tail_bound(SqueezerBank([0.0, 0.0]), 3) == 0.0


@pytest.mark.parametrize("modes", [1, 2, 5, 10])
def test_unconditional_g2_of_equal_modes(modes):
    bank = SqueezerBank(np.full(modes, 0.05))
    assert unconditional_g2(bank, 6) == pytest.approx(1 + 1 / modes, rel=0.01)


def test_unconditional_g2_of_vacuum():
    with pytest.raises(UndefinedMetricError):
        unconditional_g2(SqueezerBank([0.0]), 4)
