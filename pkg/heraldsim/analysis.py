"""
Estimators computed from event streams: heralded g2, Klyshko efficiency and
the output noise factor, plus summaries of metric sweeps.
"""
import math
import textwrap
from dataclasses import dataclass

import numpy as np
from astropy.table import Table

from heraldsim.eventsim import CHANNEL_CODES, EventStream
from heraldsim.exceptions import UndefinedMetricError

__all__ = ["CoincidenceReport", "AnalysisReport", "count_coincidences", "g2_from_counts",
           "klyshko_efficiency", "onf", "analyze_stream", "apply_extended_heralding",
           "g2_over_splits", "summarize_sweep", "REPORT_COLUMNS"]

REPORT_COLUMNS = ("H", "S1", "S2", "C", "g2", "g2_sigma", "klyshko", "onf", "onf_sigma")

ZERO_DENOMINATOR_ERROR = "g2 needs S1, S2 and H all positive; got S1={}, S2={}, H={}."
NO_HERALDS_ERROR = "The stream has no heralds."


@dataclass(frozen=True)
class CoincidenceReport:
    """
    Herald-conditioned counts of the two output detectors.

    ``g2`` and ``g2_sigma`` are `None` when the estimate is undefined.
    """
    H: int
    S1: int
    S2: int
    C: int
    g2: float = None
    g2_sigma: float = None

    def __post_init__(self):
        if min(self.H, self.S1, self.S2, self.C) < 0:
            raise ValueError("Counts must be non-negative.")
        if not self.C <= min(self.S1, self.S2) or not max(self.S1, self.S2) <= self.H:
            raise ValueError(f"Counts violate C <= min(S1, S2) <= max(S1, S2) <= H: {self}.")

    @property
    def g2_defined(self):
        return self.g2 is not None


def g2_from_counts(C, S1, S2, H):
    """
    Heralded g2 estimate ``C * H / (S1 * S2)`` and its Poisson error.

    With no coincidences the error is that of a single coincidence,
    ``H / (S1 * S2)``.

    Examples
    --------
    >>> g2_from_counts(4, 1000, 1000, 250000)  # doctest: +FLOAT_CMP
    (1.0, 0.502)
    """
    if S1 <= 0 or S2 <= 0 or H <= 0:
        raise UndefinedMetricError(ZERO_DENOMINATOR_ERROR.format(S1, S2, H))
    estimate = C * H / (S1 * S2)
    if C == 0:
        return estimate, H / (S1 * S2)
    sigma = estimate * math.sqrt(1 / C + 1 / S1 + 1 / S2 + 1 / H)
    return estimate, sigma


def _heralded_outputs(stream):
    heralds = stream.pulses_with("HERALD")
    d1 = np.intersect1d(heralds, stream.pulses_with("D1"), assume_unique=True)
    d2 = np.intersect1d(heralds, stream.pulses_with("D2"), assume_unique=True)
    return heralds, d1, d2


def count_coincidences(stream):
    """
    Count heralds, heralded clicks on D1 and D2, and heralded D1-D2 coincidences.

    Returns
    -------
    `CoincidenceReport`
    """
    heralds, d1, d2 = _heralded_outputs(stream)
    counts = dict(H=len(heralds), S1=len(d1), S2=len(d2),
                  C=len(np.intersect1d(d1, d2, assume_unique=True)))
    try:
        g2, sigma = g2_from_counts(counts["C"], counts["S1"], counts["S2"], counts["H"])
    except UndefinedMetricError:
        g2 = sigma = None
    return CoincidenceReport(g2=g2, g2_sigma=sigma, **counts)


def klyshko_efficiency(stream):
    """
    Fraction of heralded pulses with a click on D1, D2 or both,
    ``(S1 + S2 - C) / H``.
    """
    report = count_coincidences(stream)
    if report.H == 0:
        raise UndefinedMetricError(NO_HERALDS_ERROR)
    return (report.S1 + report.S2 - report.C) / report.H


def onf(stream, config):
    """
    Output noise factor of a feed-forward run.

    The share of output detections that did not come from a heralded photon
    passing its open gate. The noise is the detections on pulses whose gate
    stayed closed, which leaked through the switch, plus the dark counts
    expected inside the open gates. If no gate ever opened, all output is
    noise and the result is 1.

    Parameters
    ----------
    stream: `heraldsim.eventsim.EventStream`
    config: `heraldsim.eventsim.RunConfig`
        Settings of the run, for example from ``RunConfig.from_header``.

    Returns
    -------
    estimate, sigma: `float`
        The noise fraction and its binomial error.

    Raises
    ------
    `heraldsim.exceptions.UndefinedMetricError`
        For a run without feed-forward or without output detections.
    """
    if not config.feed_forward:
        raise UndefinedMetricError("The output noise factor needs a feed-forward run.")
    outputs = stream.channels == CHANNEL_CODES["D1"]
    outputs |= stream.channels == CHANNEL_CODES["D2"]
    output_pulses = stream.pulse_indices[outputs]
    total = len(output_pulses)
    if total == 0:
        raise UndefinedMetricError("The run has no output detections.")
    gated = stream.pulses_with("HERALD") if config.gate_opens else np.zeros(0, dtype=np.int64)
    leaked = total - int(np.count_nonzero(np.isin(output_pulses, gated)))
    accidental = len(gated) * (config.detector_d1.dark_probability
                               + config.detector_d2.dark_probability)
    noise = min(leaked + accidental, total)
    estimate = noise / total
    if 0 < noise < total:
        sigma = math.sqrt(estimate * (1 - estimate) / total)
    else:
        # Error of a single miscounted detection.
        sigma = 1 / total
    return estimate, sigma


@dataclass(frozen=True)
class AnalysisReport:
    """
    Everything `analyze_stream` estimates from one stream.

    Undefined estimates are `None`.
    """
    coincidences: CoincidenceReport
    klyshko: float = None
    klyshko_sigma: float = None
    onf: float = None
    onf_sigma: float = None
    g2_split_mean: float = None
    g2_split_std: float = None

    def as_dict(self):
        values = {"H": self.coincidences.H, "S1": self.coincidences.S1,
                  "S2": self.coincidences.S2, "C": self.coincidences.C,
                  "g2": self.coincidences.g2, "g2_sigma": self.coincidences.g2_sigma,
                  "klyshko": self.klyshko, "onf": self.onf, "onf_sigma": self.onf_sigma}
        if self.g2_split_mean is not None:
            values["g2_split_mean"] = self.g2_split_mean
            values["g2_split_std"] = self.g2_split_std
        return values

    def as_text(self):
        """Flat ``key = value`` block; undefined values are written ``undefined``."""
        return "\n".join(f"{key} = {'undefined' if value is None else value}"
                         for key, value in self.as_dict().items()) + "\n"

    def as_table(self, meta=None):
        """One-row `~astropy.table.Table`; undefined values become ``nan``."""
        values = self.as_dict()
        table = Table(rows=[[np.nan if value is None else value for value in values.values()]],
                      names=list(values))
        table.meta["comments"] = list(meta or [])
        return table

    def __str__(self):
        return textwrap.dedent(f"""\
                AnalysisReport
                --------------
                Heralds:\t{self.coincidences.H}
                g2:\t\t{self.coincidences.g2}
                Klyshko:\t{self.klyshko}
                ONF:\t\t{self.onf}""")


def apply_extended_heralding(stream):
    """
    Apply extended heralding in software: drop HERALD records of pulses on
    which R also clicked.
    """
    vetoed = np.isin(stream.pulse_indices, stream.pulses_with("R"))
    drop = (stream.channels == CHANNEL_CODES["HERALD"]) & vetoed
    header = dict(stream.header, scheme="extended", post_selected="true")
    return stream.select(~drop, header=header)


def g2_over_splits(stream, n_splits):
    """
    Mean and sample standard deviation of g2 over contiguous pulse ranges.

    Raises
    ------
    `heraldsim.exceptions.UndefinedMetricError`
        If g2 is undefined in any range.
    """
    if n_splits < 2:
        raise ValueError(f"n_splits must be at least 2; got {n_splits}.")
    edges = np.linspace(0, stream.n_pulses, n_splits + 1).astype(np.int64)
    estimates = []
    for start, stop in zip(edges[:-1], edges[1:]):
        part = (stream.pulse_indices >= start) & (stream.pulse_indices < stop)
        header = dict(stream.header, pulses=str(stream.n_pulses))
        report = count_coincidences(EventStream(header, stream.channels[part],
                                                stream.pulse_indices[part],
                                                stream.times_ps[part]))
        if not report.g2_defined:
            raise UndefinedMetricError(f"g2 is undefined in pulses [{start}, {stop}).")
        estimates.append(report.g2)
    return float(np.mean(estimates)), float(np.std(estimates, ddof=1))


def analyze_stream(stream, config=None, n_splits=None):
    """
    Run every estimator on a stream.

    Parameters
    ----------
    stream: `heraldsim.eventsim.EventStream`
    config: `heraldsim.eventsim.RunConfig`, optional
        Needed for the output noise factor, which is skipped without it or when
        feed-forward was off.
    n_splits: `int`, optional
        Also estimate g2 over this many pulse ranges.

    Returns
    -------
    `AnalysisReport`
    """
    coincidences = count_coincidences(stream)
    klyshko = klyshko_sigma = None
    if coincidences.H:
        klyshko = klyshko_efficiency(stream)
        klyshko_sigma = math.sqrt(klyshko * (1 - klyshko) / coincidences.H)
    noise = noise_sigma = None
    if config is not None and config.feed_forward:
        try:
            noise, noise_sigma = onf(stream, config)
        except UndefinedMetricError:
            pass
    split_mean = split_std = None
    if n_splits:
        split_mean, split_std = g2_over_splits(stream, n_splits)
    return AnalysisReport(coincidences, klyshko, klyshko_sigma, noise, noise_sigma,
                          split_mean, split_std)


def _interpolate_rate(g2_target, g2_curve, rate_curve):
    order = np.argsort(g2_curve)
    return float(np.exp(np.interp(np.log(g2_target), np.log(g2_curve[order]),
                                  np.log(rate_curve[order]))))


def summarize_sweep(table):
    """
    Headline comparisons of a metric sweep.

    Parameters
    ----------
    table: `astropy.table.Table`
        Sweep rows with the `heraldsim.heralding.METRIC_COLUMNS`.

    Returns
    -------
    `dict`
        Any of ``max_g2_reduction``, ``final_g2_reduction``,
        ``rate_ratio_at_matched_g2`` and ``max_fitness_gain``, depending on
        which schemes the sweep holds.
    """
    def scheme_rows(name):
        rows = table[table["scheme"] == name]
        return rows[np.argsort(rows["n_bar"], kind="stable")]

    summary = {}
    schemes = set(table["scheme"])
    if {"standard", "extended"} <= schemes:
        standard, extended = scheme_rows("standard"), scheme_rows("extended")
        reduction = 1 - np.asarray(extended["g2"]) / np.asarray(standard["g2"])
        summary["max_g2_reduction"] = float(np.max(reduction))
        summary["final_g2_reduction"] = float(reduction[-1])
        g2_std = np.asarray(standard["g2"], dtype=float)
        rate_std = np.asarray(standard["p_herald"] * standard["p_ext"], dtype=float)
        g2_ext = np.asarray(extended["g2"], dtype=float)
        rate_ext = np.asarray(extended["p_herald"] * extended["p_ext"], dtype=float)
        matched = (g2_ext >= g2_std.min()) & (g2_ext <= g2_std.max())
        if np.any(matched):
            ratios = [rate / _interpolate_rate(g2, g2_std, rate_std)
                      for g2, rate in zip(g2_ext[matched], rate_ext[matched])]
            summary["rate_ratio_at_matched_g2"] = float(np.max(ratios))
    if {"standard", "extended+ffwd"} <= schemes:
        standard, gated = scheme_rows("standard"), scheme_rows("extended+ffwd")
        gain = (np.asarray(gated["fitness"], dtype=float)
                / np.asarray(standard["fitness"], dtype=float) - 1)
        if np.any(np.isfinite(gain)):
            summary["max_fitness_gain"] = float(np.nanmax(gain))
    return summary
