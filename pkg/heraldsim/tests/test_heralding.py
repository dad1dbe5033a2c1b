import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heraldsim.exceptions import InconsistentEfficiencyError, UndefinedMetricError
from heraldsim.heralding import (BLIND_DETECTOR, METRIC_COLUMNS, PERFECT_DETECTOR,
                                 DetectorModel, DetectorSet, calibrate_to_herald_probability,
                                 click_coefficient, evaluate_scheme, extinction_transmission,
                                 fidelity_approx, g2_heralded, g2_weak_pump,
                                 herald_probability, heralded_fidelity, p_ext, p_herald,
                                 p_herald_weak_pump, p_noclick_given_no_herald, scale_noclick,
                                 source_fitness, spectral_purity)
from heraldsim.pdcstate import SqueezerBank, squeezer_bank
from heraldsim.spectra import FilteredSchmidt, SchmidtSpectrum

FILTERED = FilteredSchmidt([0.9, 0.2], [0.35, 0.1])
WEAK = SqueezerBank([0.05, 0.03], [0.04])
LOSSY = DetectorModel(0.3, 1e-4)
LOSSLESS_SET = DetectorSet()
EXPERIMENTAL_SET = DetectorSet(transmitted=LOSSY, reflected=LOSSY,
                               heralded=DetectorModel(0.3, 0.0))

q_values = st.floats(0.0, 0.25)
banks = st.builds(
    lambda q_t, q_r: SqueezerBank(sorted(q_t, reverse=True), sorted(q_r, reverse=True)),
    st.lists(q_values, min_size=1, max_size=3).filter(lambda q: max(q) > 0.01),
    st.lists(q_values, min_size=0, max_size=3))
efficiencies = st.floats(0.05, 1.0)


def test_click_coefficient_example():
    assert click_coefficient(2, DetectorModel(0.5, 0.01)) == pytest.approx(0.7525)
    assert click_coefficient(0, DetectorModel(0.5, 0.01)) == pytest.approx(0.01)
    assert isinstance(click_coefficient(3, PERFECT_DETECTOR), float)


def test_click_coefficient_array():
    result = click_coefficient(np.arange(4), DetectorModel(0.5, 0.0))
    np.testing.assert_allclose(result, [0, 0.5, 0.75, 0.875])
    with pytest.raises(ValueError):
        click_coefficient(-1, PERFECT_DETECTOR)


@pytest.mark.parametrize("efficiency, dark", [(1.5, 0.0), (-0.1, 0.0), (0.5, 1.0), (0.5, -0.1)])
def test_detector_model_validation(efficiency, dark):
    with pytest.raises(ValueError):
        DetectorModel(efficiency, dark)


def test_detector_scaled():
    assert DetectorModel(0.8, 0.01).scaled(0.5) == DetectorModel(0.4, 0.01)
    with pytest.raises(ValueError):
        PERFECT_DETECTOR.scaled(2.0)


def test_detector_set_defaults():
    detectors = DetectorSet(heralded=DetectorModel(0.25, 0.0))
    assert detectors.klyshko == 0.25
    with pytest.raises(ValueError):
        DetectorSet(extinction_db=-1)


@pytest.mark.parametrize("extinction_db, expected", [(0, 1.0), (10, 0.1), (20, 0.01)])
def test_extinction_transmission(extinction_db, expected):
    assert extinction_transmission(extinction_db) == pytest.approx(expected)


def test_single_mode_herald_probability():
    mu = np.tanh(0.2) ** 2
    bank = SqueezerBank([0.2])
    assert p_herald(bank, PERFECT_DETECTOR, 20) == pytest.approx(mu, rel=1e-12)
    assert p_ext(bank, PERFECT_DETECTOR, 20) == 1.0


def test_herald_probability_factorizes():
    bank = squeezer_bank(FILTERED, 0.1)
    joint = herald_probability(bank, LOSSY, PERFECT_DETECTOR, 6)
    assert joint == pytest.approx(p_herald(bank, LOSSY, 6) * p_ext(bank, PERFECT_DETECTOR, 6),
                                  rel=1e-9)


def test_single_mode_fidelity_and_g2():
    mu = np.tanh(0.2) ** 2
    bank = SqueezerBank([0.2])
    assert heralded_fidelity(bank, PERFECT_DETECTOR, n_max=20) == pytest.approx(1 - mu,
                                                                                rel=1e-12)
    # Conditioned on a click the pair number is 1 + geometric, so g2 = 2 mu.
    assert g2_heralded(bank, PERFECT_DETECTOR, n_max=20) == pytest.approx(2 * mu, rel=1e-9)


def test_fidelity_undefined():
    with pytest.raises(UndefinedMetricError):
        heralded_fidelity(SqueezerBank([], [0.1]), PERFECT_DETECTOR)
    with pytest.raises(UndefinedMetricError):
        heralded_fidelity(SqueezerBank([0.1]), BLIND_DETECTOR)
    with pytest.raises(UndefinedMetricError):
        g2_heralded(SqueezerBank([0.1]), BLIND_DETECTOR)


@settings(max_examples=60, deadline=None)
@given(bank=banks, eta=efficiencies, dark=st.floats(0.0, 0.01))
def test_extended_fidelity_is_never_lower(bank, eta, dark):
    det_r = DetectorModel(eta, dark)
    standard = heralded_fidelity(bank, LOSSY, BLIND_DETECTOR, 8)
    extended = heralded_fidelity(bank, LOSSY, det_r, 8)
    assert extended >= standard * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(bank=banks, eta=efficiencies)
def test_extended_g2_is_never_higher(bank, eta):
    det_r = DetectorModel(eta, 0.0)
    standard = g2_heralded(bank, LOSSY, BLIND_DETECTOR, 8)
    extended = g2_heralded(bank, LOSSY, det_r, 8)
    assert extended <= standard * (1 + 1e-9)


@settings(max_examples=60, deadline=None)
@given(bank=banks, extra=st.floats(0.001, 0.25), eta=efficiencies)
def test_reflected_mode_never_lowers_standard_g2(bank, extra, eta):
    det_t = DetectorModel(eta, 0.0)
    polluted = SqueezerBank(bank.q_t, sorted([*bank.q_r, extra], reverse=True))
    clean = g2_heralded(bank, det_t, BLIND_DETECTOR, 8)
    assert g2_heralded(polluted, det_t, BLIND_DETECTOR, 8) >= clean * (1 - 1e-9)


def test_spectral_purity_sources():
    assert spectral_purity(SqueezerBank([0.3, 0.1])) == pytest.approx(0.82)
    assert spectral_purity(SchmidtSpectrum([1.0])) == 1.0
    assert spectral_purity(FILTERED) == pytest.approx((0.9 ** 4 + 0.2 ** 4)
                                                      / (0.9 ** 2 + 0.2 ** 2) ** 2)
    with pytest.raises(UndefinedMetricError):
        spectral_purity(FilteredSchmidt([], [0.5]))


def test_spectral_purity_is_pump_independent():
    purities = [spectral_purity(squeezer_bank(FILTERED, B)) for B in (0.0, 0.1, 1.0)]
    assert purities[0] == purities[1] == purities[2]


def test_fidelity_approx():
    assert fidelity_approx(0.82, 0.02) == pytest.approx(math.sqrt(0.82) * 0.99)
    assert fidelity_approx(1.0, 3.0) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        fidelity_approx(0.0, 0.1)
    with pytest.raises(ValueError):
        fidelity_approx(0.5, -0.1)


def test_weak_pump_expansions():
    assert p_herald_weak_pump(WEAK, LOSSY) == pytest.approx(p_herald(WEAK, LOSSY, 6), rel=1e-2)
    for det_r in (BLIND_DETECTOR, PERFECT_DETECTOR, LOSSY):
        assert g2_weak_pump(WEAK, PERFECT_DETECTOR, det_r) == pytest.approx(
            g2_heralded(WEAK, PERFECT_DETECTOR, det_r, 6), rel=0.05)


def test_weak_pump_g2_undefined():
    with pytest.raises(UndefinedMetricError):
        g2_weak_pump(SqueezerBank([], [0.1]), PERFECT_DETECTOR)


def test_scale_noclick():
    assert scale_noclick(0.05, 0.5) == pytest.approx(0.9)
    with pytest.raises(InconsistentEfficiencyError):
        scale_noclick(0.6, 0.5)
    with pytest.raises(ValueError):
        scale_noclick(0.0, 0.0)


def test_noclick_without_reflected_modes_is_one():
    bank = SqueezerBank([0.3, 0.1])
    assert p_noclick_given_no_herald(bank, PERFECT_DETECTOR, 1.0, 6) == pytest.approx(
        1.0, abs=1e-12)


def test_feed_forward_raises_noclick():
    bank = squeezer_bank(FILTERED, 0.3)
    arm = DetectorModel(0.3, 0.0)
    open_switch = p_noclick_given_no_herald(bank, arm, 0.3, 6, det_t=LOSSY)
    gated = p_noclick_given_no_herald(bank, arm, 0.3, 6, det_t=LOSSY, det_r=LOSSY,
                                      extinction_db=20)
    assert gated > open_switch
    assert 0 <= open_switch <= 1


def test_source_fitness():
    assert source_fitness(0.5, 0.8, 0.9) == pytest.approx(0.85)
    assert source_fitness(0.0, 0.3, 1.0) == 1.0
    with pytest.raises(ValueError):
        source_fitness(1.2, 0.5, 0.5)


def test_evaluate_scheme_row():
    metrics = evaluate_scheme(FILTERED, 0.2, "extended+ffwd", EXPERIMENTAL_SET, 6)
    row = metrics.as_row()
    assert len(row) == len(METRIC_COLUMNS)
    assert row[0] == "extended+ffwd"
    assert metrics.mode_count == 4
    assert metrics.n_bar == pytest.approx(np.sum(np.sinh(0.2 * np.array([0.9, 0.2, 0.35, 0.1]))
                                                 ** 2))
    assert metrics.effective_herald_probability == pytest.approx(
        herald_probability(squeezer_bank(FILTERED, 0.2), LOSSY, LOSSY, 6), rel=1e-9)
    assert not metrics.truncated


def test_evaluate_scheme_unknown():
    with pytest.raises(ValueError):
        evaluate_scheme(FILTERED, 0.2, "heralded", LOSSLESS_SET)


def test_evaluate_scheme_inconsistent_efficiency():
    # A blind Klyshko scale cannot absorb the clicks of a strongly pumped source.
    detectors = DetectorSet(heralded=DetectorModel(0.3, 0.0), klyshko=0.01)
    metrics = evaluate_scheme(FILTERED, 1.0, "standard", detectors, 10)
    assert np.isnan(metrics.p_noclick)
    assert np.isnan(metrics.fitness)
    assert metrics.fidelity > 0


@pytest.mark.parametrize("scheme", ["standard", "extended"])
def test_calibrate_to_herald_probability(scheme):
    B = calibrate_to_herald_probability(FILTERED, 0.0037, scheme, EXPERIMENTAL_SET, 6)
    bank = squeezer_bank(FILTERED, B)
    det_r = LOSSY if scheme == "extended" else BLIND_DETECTOR
    assert herald_probability(bank, LOSSY, det_r, 6) == pytest.approx(0.0037, rel=1e-9)


def test_calibrate_to_herald_probability_out_of_reach():
    with pytest.raises(ValueError):
        calibrate_to_herald_probability(FILTERED, 1e-6, "standard",
                                        DetectorSet(transmitted=DetectorModel(0.3, 1e-3)), 6)
    with pytest.raises(ValueError):
        calibrate_to_herald_probability(FILTERED, 0.9, "extended", EXPERIMENTAL_SET, 6)


@pytest.mark.parametrize("scheme", ["unfiltered", "standard", "extended", "extended+ffwd"])
def test_truncation_convergence(scheme):
    for B in (0.15, 0.3):
        bank = squeezer_bank(FILTERED, B)
        assert sum(np.sinh(bank.q) ** 2) <= 0.2
        low = evaluate_scheme(FILTERED, B, scheme, EXPERIMENTAL_SET, 6)
        high = evaluate_scheme(FILTERED, B, scheme, EXPERIMENTAL_SET, 8)
        for name in ("p_herald", "p_ext", "fidelity", "g2", "p_noclick", "fitness"):
            assert getattr(low, name) == pytest.approx(getattr(high, name), abs=1e-4)
