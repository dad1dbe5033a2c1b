import math
import os
from dataclasses import replace

import numpy as np
import pytest
from astropy.table import Table
from hypothesis import given, settings
from hypothesis import strategies as st

from heraldsim.analysis import (REPORT_COLUMNS, CoincidenceReport, analyze_stream,
                                apply_extended_heralding, count_coincidences, g2_from_counts,
                                g2_over_splits, klyshko_efficiency, onf, summarize_sweep)
from heraldsim.eventsim import CHANNELS, EventStream, RunConfig, read_stream, simulate_run
from heraldsim.exceptions import UndefinedMetricError
from heraldsim.heralding import BLIND_DETECTOR, PERFECT_DETECTOR, DetectorModel, g2_heralded
from heraldsim.pdcstate import SqueezerBank, family_count_distribution
from heraldsim.scenario import Scenario
from heraldsim.tests import test_data_dir

BANK = SqueezerBank([0.3, 0.1], [0.2])
OUTPUT_DETECTOR = DetectorModel(0.5)
OFFSETS = np.array([0, 0, 500, 500, 100])
PERIOD = 1000


@pytest.fixture
def fixture_stream():
    return read_stream(os.path.join(test_data_dir, "stream_fixture.csv"))


def make_stream(pulses, n_pulses):
    """Stream from ``{pulse: set of channel names}``."""
    channels, indices = [], []
    for pulse, names in pulses.items():
        for name in names:
            channels.append(CHANNELS.index(name))
            indices.append(pulse)
    channels = np.array(channels, dtype=np.uint8)
    indices = np.array(indices, dtype=np.int64)
    times = indices * PERIOD + OFFSETS[channels]
    order = np.lexsort((channels, times))
    return EventStream({"pulses": n_pulses}, channels[order], indices[order], times[order])


def test_g2_from_counts():
    assert g2_from_counts(4, 1000, 1000, 250000) == pytest.approx((1.0, 0.502))
    assert g2_from_counts(1, 1000, 1000, 500000)[0] == pytest.approx(0.5)
    estimate, sigma = g2_from_counts(0, 100, 200, 1000)
    assert estimate == 0.0
    assert sigma == pytest.approx(0.05)


@pytest.mark.parametrize("counts", [(1, 0, 5, 10), (1, 5, 0, 10), (0, 1, 1, 0)])
def test_g2_from_counts_undefined(counts):
    with pytest.raises(UndefinedMetricError):
        g2_from_counts(*counts)


@pytest.mark.parametrize("counts", [(-1, 0, 0, 0), (3, 2, 2, 3), (3, 4, 2, 2)])
def test_coincidence_report_validation(counts):
    with pytest.raises(ValueError):
        CoincidenceReport(*counts)


def test_fixture_counts(fixture_stream):
    report = count_coincidences(fixture_stream)
    assert (report.H, report.S1, report.S2, report.C) == (2, 1, 2, 1)
    assert report.g2 == pytest.approx(1.0)
    assert klyshko_efficiency(fixture_stream) == pytest.approx(1.0)


def test_fixture_analysis(fixture_stream):
    report = analyze_stream(fixture_stream)
    assert report.onf is None
    assert "onf = undefined" in report.as_text()
    table = report.as_table(["stand-in: false"])
    assert table.colnames == list(REPORT_COLUMNS)
    assert np.isnan(table["onf"][0])
    assert table.meta["comments"] == ["stand-in: false"]
    assert "AnalysisReport" in str(report)


def test_g2_over_splits(fixture_stream):
    with pytest.raises(UndefinedMetricError):
        g2_over_splits(fixture_stream, 2)
    with pytest.raises(ValueError):
        g2_over_splits(fixture_stream, 1)


def test_g2_over_splits_statistics():
    stream = make_stream({0: {"HERALD", "D1", "D2"}, 1: {"HERALD", "D1"}, 2: {"HERALD", "D2"},
                          3: {"HERALD", "D1", "D2"}, 4: {"HERALD", "D1"},
                          5: {"HERALD", "D2"}}, 6)
    mean, std = g2_over_splits(stream, 2)
    # Each half has H = 3, S1 = S2 = 2, C = 1, so g2 = 0.75 in both.
    assert mean == pytest.approx(0.75)
    assert std == pytest.approx(0.0)


def test_no_heralds():
    stream = make_stream({1: {"T", "D1"}}, 4)
    report = analyze_stream(stream)
    assert report.coincidences.H == 0
    assert not report.coincidences.g2_defined
    assert report.klyshko is None
    with pytest.raises(UndefinedMetricError):
        klyshko_efficiency(stream)


pulse_contents = st.dictionaries(st.integers(0, 49), st.sets(st.sampled_from(CHANNELS)),
                                 max_size=50)


@settings(max_examples=100, deadline=None)
@given(pulses=pulse_contents)
def test_counts_match_an_independent_tally(pulses):
    stream = make_stream(pulses, 50)
    heralds = {pulse for pulse, names in pulses.items() if "HERALD" in names}
    d1 = {pulse for pulse in heralds if "D1" in pulses[pulse]}
    d2 = {pulse for pulse in heralds if "D2" in pulses[pulse]}
    report = count_coincidences(stream)
    assert (report.H, report.S1, report.S2, report.C) == (len(heralds), len(d1), len(d2),
                                                          len(d1 & d2))
    assert report.S1 + report.S2 - report.C == len(d1 | d2)


def test_post_selection_matches_extended_run():
    standard = RunConfig(BANK, pulses=30000, seed=5, feed_forward=False,
                         detector_r=DetectorModel(0.7))
    extended = replace(standard, scheme="extended")
    selected = apply_extended_heralding(simulate_run(standard))
    direct = simulate_run(extended)
    assert selected.header["scheme"] == "extended"
    assert selected.header["post_selected"] == "true"
    np.testing.assert_array_equal(selected.channels, direct.channels)
    np.testing.assert_array_equal(selected.pulse_indices, direct.pulse_indices)
    assert count_coincidences(selected) == count_coincidences(direct)


def threshold_prediction(bank, detector):
    """Expected S1/H (equal to S2/H), C/H and Klyshko efficiency for standard heralding
    with a perfect herald detector and no feed-forward."""
    n_max = 16
    p_t = family_count_distribution(bank.q_t, n_max)
    p_r = family_count_distribution(bank.q_r, n_max)
    p_t[0] = 0.0
    weights = np.outer(p_t, p_r)
    weights /= weights.sum()
    photons = np.arange(n_max + 1)
    idler = photons[:, np.newaxis] + photons[np.newaxis, :]
    one_dark = (1 - detector.efficiency / 2) ** idler
    both_dark = (1 - detector.efficiency) ** idler
    single = np.sum(weights * (1 - one_dark))
    coincidence = np.sum(weights * (1 - 2 * one_dark + both_dark))
    klyshko = np.sum(weights * (1 - both_dark))
    return single, coincidence, klyshko


@pytest.mark.slow
def test_threshold_estimators_match_prediction():
    config = RunConfig(BANK, pulses=1_000_000, seed=21, feed_forward=False,
                       detector_d1=OUTPUT_DETECTOR, detector_d2=OUTPUT_DETECTOR, workers=4)
    report = analyze_stream(simulate_run(config))
    single, coincidence, klyshko = threshold_prediction(BANK, OUTPUT_DETECTOR)
    expected_g2 = coincidence / single ** 2
    assert abs(report.coincidences.g2 - expected_g2) < 4 * report.coincidences.g2_sigma
    assert abs(report.klyshko - klyshko) < 4 * report.klyshko_sigma


def test_onf_needs_feed_forward():
    config = RunConfig(BANK, pulses=1000, feed_forward=False)
    with pytest.raises(UndefinedMetricError):
        onf(simulate_run(config), config)


def test_onf_with_perfect_extinction():
    config = RunConfig(BANK, pulses=50000, seed=2, extinction_db=math.inf)
    stream = simulate_run(config)
    total = stream.count("D1") + stream.count("D2")
    assert onf(stream, config) == (0.0, 1 / total)


def test_onf_when_the_gate_misses_the_photon():
    config = RunConfig(BANK, pulses=50000, seed=2, gate_offset=1.2e-6)
    stream = simulate_run(config)
    total = stream.count("D1") + stream.count("D2")
    assert onf(stream, config) == (1.0, 1 / total)


def test_onf_counts_leaks_and_dark_counts():
    dark = DetectorModel(1.0, 0.1)
    config = RunConfig(BANK, pulses=4, detector_d1=dark, detector_d2=dark)
    stream = make_stream({0: {"HERALD", "D1"}, 1: {"HERALD", "D1"}, 2: {"D2"}}, 4)
    estimate, sigma = onf(stream, config)
    # One leaked detection and 0.2 expected dark counts in each of two gates.
    assert estimate == pytest.approx((1 + 2 * 0.2) / 3)
    assert sigma == pytest.approx(math.sqrt(estimate * (1 - estimate) / 3))


def test_onf_falls_with_extinction():
    estimates = []
    for extinction_db in (10, 20, 30):
        config = RunConfig(BANK, pulses=300000, seed=4, extinction_db=extinction_db)
        estimates.append(onf(simulate_run(config), config)[0])
    assert estimates[0] > estimates[1] > estimates[2] > 0


def test_analyze_stream_uses_run_header():
    config = RunConfig(BANK, pulses=50000, seed=9)
    stream = simulate_run(config)
    report = analyze_stream(stream, RunConfig.from_header(stream.header), n_splits=4)
    assert 0 < report.onf < 1
    assert report.g2_split_mean > 0
    assert set(report.as_dict()) == set(REPORT_COLUMNS) | {"g2_split_mean", "g2_split_std"}


@pytest.mark.slow
def test_onf_of_the_reference_source():
    scenario = Scenario.reference()
    config = RunConfig.from_scenario(scenario, preset="lossless", herald_probability=0.0037,
                                     scheme="extended", pulses=10_000_000, seed=1, workers=4)
    estimate, sigma = onf(simulate_run(config), config)
    assert 0.004 <= estimate <= 0.044
    assert sigma < 0.005


@pytest.mark.slow
def test_g2_estimate_matches_heralded_g2():
    detector = DetectorModel(0.2)
    config = RunConfig(BANK, pulses=2_000_000, seed=13, feed_forward=False,
                       detector_d1=detector, detector_d2=detector, workers=4)
    report = count_coincidences(simulate_run(config))
    expected = g2_heralded(BANK, PERFECT_DETECTOR, BLIND_DETECTOR)
    assert abs(report.g2 - expected) < 3 * report.g2_sigma


def sweep_table():
    return Table({
        "scheme": ["standard", "standard", "extended", "extended", "extended+ffwd",
                   "extended+ffwd"],
        "n_bar": [0.1, 0.2] * 3,
        "g2": [0.2, 0.4, 0.1, 0.3, 0.1, 0.3],
        "p_herald": [0.01, 0.04, 0.06, 0.05, 0.06, 0.05],
        "p_ext": [1.0, 1.0, 0.95, 0.9, 0.95, 0.9],
        "fitness": [0.8, 0.7, 0.85, 0.8, 0.88, 0.91],
    })


def test_summarize_sweep():
    summary = summarize_sweep(sweep_table())
    assert summary["max_g2_reduction"] == pytest.approx(0.5)
    assert summary["final_g2_reduction"] == pytest.approx(0.25)
    # Standard reaches g2 = 0.3 at a rate of 0.01 * 1.5**2, log-interpolated.
    assert summary["rate_ratio_at_matched_g2"] == pytest.approx(0.045 / 0.0225)
    assert summary["max_fitness_gain"] == pytest.approx(0.3)


def test_summarize_sweep_single_scheme():
    table = sweep_table()
    assert summarize_sweep(table[table["scheme"] == "standard"]) == {}
