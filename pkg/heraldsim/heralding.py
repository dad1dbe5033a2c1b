"""
Heralding with threshold detectors and the quality metrics of the heralded photon.

The signal photon of a pair goes either through the heralding filter (the
transmitted family, detector T) or is reflected by it (the reflected family,
detector R). Standard heralding fires on a click at T. Extended heralding also
requires no click at R, which rejects pulses whose idler arm carries photons
from outside the filter band.

All sums run over photon numbers ``n_t`` and ``n_r`` of the two families with
the joint truncation ``n_t + n_r <= n_max``. Each family's photon-number
distribution comes from `heraldsim.pdcstate.family_count_distribution`, which
is the grouped form of the full occupation-pattern sum.
"""
import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.optimize

from heraldsim.config import conf
from heraldsim.exceptions import (InconsistentEfficiencyError, TruncationWarning,
                                  UndefinedMetricError)
from heraldsim.logger import log
from heraldsim.pdcstate import (SqueezerBank, family_count_distribution, mean_pair_number,
                                squeezer_bank)

__all__ = ["DetectorModel", "DetectorSet", "HeraldMetrics", "BLIND_DETECTOR",
           "PERFECT_DETECTOR", "SCHEMES", "METRIC_COLUMNS", "click_coefficient",
           "p_herald", "p_ext", "herald_probability", "heralded_fidelity",
           "spectral_purity", "g2_heralded", "fidelity_approx",
           "heralded_arm_click_probability", "p_noclick_given_no_herald", "scale_noclick",
           "source_fitness", "p_herald_weak_pump", "g2_weak_pump", "evaluate_scheme",
           "calibrate_to_herald_probability", "extinction_transmission"]

TAIL_TOLERANCE = 1e-3
ROUNDING_TOLERANCE = 1e-12

SCHEMES = ("unfiltered", "standard", "extended", "extended+ffwd")
METRIC_COLUMNS = ("scheme", "B", "n_bar", "p_herald", "p_ext", "fidelity", "purity", "g2",
                  "fidelity_approx", "p_noclick", "fitness", "mode_count", "n_max")

PROBABILITY_ERROR = "{} must lie in {}; got {}."
UNKNOWN_SCHEME_ERROR = "Unknown heralding scheme {!r}. Choose one of: {}."
NO_HERALD_ERROR = "The herald probability is zero, so heralded quantities are undefined."
NO_TRANSMITTED_MODE_ERROR = "The bank has no transmitted mode to herald a photon into."
EMPTY_PURITY_ERROR = "Spectral purity needs at least one nonzero transmitted coefficient."
INCONSISTENT_EFFICIENCY_ERROR = ("Heralded-arm click probability {:.6g} exceeds the Klyshko "
                                 "efficiency {:.6g}; the source-level no-click probability "
                                 "would be negative.")


def _check_probability(value, name, upper_open=False, tolerance=0.0):
    value = float(value)
    if not -tolerance <= value <= 1.0 + tolerance or (upper_open and value >= 1.0):
        bracket = "[0, 1)" if upper_open else "[0, 1]"
        raise ValueError(PROBABILITY_ERROR.format(name, bracket, value))
    return value


@dataclass(frozen=True)
class DetectorModel:
    """
    Threshold (click/no-click) detector.

    Parameters
    ----------
    efficiency: `float`
        Probability that one photon produces a click, including any path
        transmission in front of the detector.
    dark_probability: `float`
        Probability of a click per pulse with no photon present.
    """
    efficiency: float = 1.0
    dark_probability: float = 0.0

    def __post_init__(self):
        _check_probability(self.efficiency, "efficiency")
        _check_probability(self.dark_probability, "dark_probability", upper_open=True)

    def scaled(self, transmission):
        """Copy with the efficiency multiplied by a path transmission."""
        return replace(self, efficiency=self.efficiency * _check_probability(
            transmission, "transmission"))

    def no_click(self, n):
        """Probability of no click with ``n`` photons present."""
        return 1 - click_coefficient(n, self)


BLIND_DETECTOR = DetectorModel(0.0, 0.0)
PERFECT_DETECTOR = DetectorModel(1.0, 0.0)


def click_coefficient(n, det):
    """
    Click probability of a threshold detector with ``n`` incident photons.

    Parameters
    ----------
    n: `int` or array-like
        Photon number(s), non-negative.
    det: `DetectorModel`

    Returns
    -------
    `float` or `numpy.ndarray`
        ``1 - (1 - d) * (1 - eta)**n``.

    Examples
    --------
    >>> click_coefficient(2, DetectorModel(0.5, 0.01))  # doctest: +FLOAT_CMP
    0.7525
    """
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError(f"Photon numbers must be non-negative; got {n}.")
    result = 1 - (1 - det.dark_probability) * (1 - det.efficiency) ** n
    return float(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class DetectorSet:
    """
    Detectors of one experimental configuration.

    Parameters
    ----------
    transmitted: `DetectorModel`
        Detector T behind the heralding filter, path losses folded in.
    reflected: `DetectorModel`
        Detector R on the filter's reflection port.
    heralded: `DetectorModel`
        The heralded arm as a whole, D1 and D2 together, with its path losses.
    klyshko: `float`, optional
        Klyshko efficiency used to scale the no-click probability. Defaults to
        the heralded-arm efficiency.
    extinction_db: `float`
        Extinction of the feed-forward switch.
    """
    transmitted: DetectorModel = PERFECT_DETECTOR
    reflected: DetectorModel = PERFECT_DETECTOR
    heralded: DetectorModel = PERFECT_DETECTOR
    klyshko: float = None
    extinction_db: float = 20.0

    def __post_init__(self):
        if self.klyshko is None:
            object.__setattr__(self, "klyshko", self.heralded.efficiency)
        if self.extinction_db < 0:
            raise ValueError(f"extinction_db must be non-negative; got {self.extinction_db}.")


def extinction_transmission(extinction_db):
    """Transmission of a closed switch, ``10**(-E/10)``."""
    if extinction_db < 0:
        raise ValueError(f"extinction_db must be non-negative; got {extinction_db}.")
    return 10 ** (-extinction_db / 10)


def _family_distribution(q, n_max):
    distribution = family_count_distribution(q, n_max)
    tail = 1.0 - math.fsum(distribution)
    if tail > TAIL_TOLERANCE:
        warnings.warn(f"Truncating at {n_max} photons discards {tail:.3g} of the "
                      "photon-number distribution.", TruncationWarning)
    return distribution


def _joint_weights(bank, n_max):
    """
    Probabilities of ``(n_t, n_r)`` on the truncated space ``n_t + n_r <= n_max``.
    """
    p_t = family_count_distribution(bank.q_t, n_max)
    p_r = family_count_distribution(bank.q_r, n_max)
    joint = np.outer(p_t, p_r)
    photons = np.arange(n_max + 1)
    joint[photons[:, np.newaxis] + photons[np.newaxis, :] > n_max] = 0.0
    tail = 1.0 - math.fsum(joint.ravel())
    if tail > TAIL_TOLERANCE:
        warnings.warn(f"Truncating at {n_max} photons discards {tail:.3g} of the "
                      "joint photon-number distribution.", TruncationWarning)
    return joint, photons


def _resolve_n_max(n_max):
    n_max = conf.n_max if n_max is None else int(n_max)
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1; got {n_max}.")
    return n_max


def p_herald(bank, det_t, n_max=None):
    """
    Probability of a click at the transmitted-family detector.

    The reflected family sums out.
    """
    n_max = _resolve_n_max(n_max)
    distribution = _family_distribution(bank.q_t, n_max)
    return math.fsum(distribution * click_coefficient(np.arange(n_max + 1), det_t))


def p_ext(bank, det_r, n_max=None):
    """
    Probability of no click at the reflected-family detector.
    """
    n_max = _resolve_n_max(n_max)
    distribution = _family_distribution(bank.q_r, n_max)
    return math.fsum(distribution * det_r.no_click(np.arange(n_max + 1)))


def herald_probability(bank, det_t, det_r, n_max=None):
    """
    Joint probability of a click at T and no click at R.

    Evaluated on the joint truncated space rather than as a product of the
    marginals `p_herald` and `p_ext`; the two agree because the families are
    independent.
    """
    n_max = _resolve_n_max(n_max)
    joint, photons = _joint_weights(bank, n_max)
    herald = np.outer(click_coefficient(photons, det_t), det_r.no_click(photons))
    return math.fsum((joint * herald).ravel())


def heralded_fidelity(bank, det_t, det_r=BLIND_DETECTOR, n_max=None):
    """
    Overlap of the heralded idler state with one photon in the first transmitted mode.

    Parameters
    ----------
    bank: `heraldsim.pdcstate.SqueezerBank`
    det_t: `DetectorModel`
        Transmitted-family (herald) detector.
    det_r: `DetectorModel`
        Reflected-family detector. `BLIND_DETECTOR` gives standard heralding.
    n_max: `int`, optional
        Photon-number truncation. Defaults to ``heraldsim.conf.n_max``.

    Returns
    -------
    `float`

    Raises
    ------
    `heraldsim.exceptions.UndefinedMetricError`
        If the bank cannot herald.
    """
    if len(bank.q_t) == 0:
        raise UndefinedMetricError(NO_TRANSMITTED_MODE_ERROR)
    herald = p_herald(bank, det_t, n_max)
    extended = p_ext(bank, det_r, n_max)
    if herald == 0 or extended == 0:
        raise UndefinedMetricError(NO_HERALD_ERROR)
    target = (bank.vacuum_probability * click_coefficient(1, det_t)
              * (1 - det_r.dark_probability) * np.tanh(bank.q_t[0]) ** 2)
    return float(target / (herald * extended))


def spectral_purity(source):
    """
    Spectral purity of the heralded photon, ``sum(q**4) / sum(q**2)**2`` over
    the transmitted family.

    Parameters
    ----------
    source: `heraldsim.pdcstate.SqueezerBank`, `heraldsim.spectra.FilteredSchmidt` or `heraldsim.spectra.SchmidtSpectrum`
        Banks built by `heraldsim.pdcstate.squeezer_bank` use their unscaled
        coefficients, so the result does not depend on the pump factor.

    Examples
    --------
    >>> from heraldsim.pdcstate import SqueezerBank
    >>> spectral_purity(SqueezerBank([0.3, 0.1]))  # doctest: +FLOAT_CMP
    0.82
    """
    if isinstance(source, SqueezerBank):
        values = source.schmidt_t if source.schmidt_t is not None else source.q_t
    elif hasattr(source, "transmitted"):
        values = source.transmitted
    else:
        values = source.coefficients
    squares = np.asarray(values, dtype=float) ** 2
    weight = np.sum(squares)
    if weight == 0:
        raise UndefinedMetricError(EMPTY_PURITY_ERROR)
    return float(np.sum(squares ** 2) / weight ** 2)


def g2_heralded(bank, det_t, det_r=BLIND_DETECTOR, n_max=None):
    """
    Heralded second-order correlation of the idler arm.

    The idler carries the partners of both families, so its photon number is
    ``n_t + n_r``. The distribution is conditioned on a click at T and no click
    at R, and ``<n(n-1)> / <n>**2`` is returned.

    Raises
    ------
    `heraldsim.exceptions.UndefinedMetricError`
        If nothing is heralded or the heralded idler is empty.
    """
    n_max = _resolve_n_max(n_max)
    joint, photons = _joint_weights(bank, n_max)
    weights = joint * np.outer(click_coefficient(photons, det_t), det_r.no_click(photons))
    total = math.fsum(weights.ravel())
    if total == 0:
        raise UndefinedMetricError(NO_HERALD_ERROR)
    idler = photons[:, np.newaxis] + photons[np.newaxis, :]
    mean = math.fsum((weights * idler).ravel()) / total
    if mean == 0:
        raise UndefinedMetricError("The heralded idler arm is empty, so g2 is undefined.")
    factorial = math.fsum((weights * idler * (idler - 1)).ravel()) / total
    return factorial / mean ** 2


def fidelity_approx(P, g2):
    """
    Approximate heralded fidelity ``sqrt(P) * (1 - g2 / 2)``.

    Can be negative for ``g2 > 2``.

    Examples
    --------
    >>> fidelity_approx(0.82, 0.02)  # doctest: +FLOAT_CMP
    0.8964686274069883
    """
    if not 0 < P <= 1:
        raise ValueError(f"Purity must lie in (0, 1]; got {P}.")
    if not g2 >= 0:
        raise ValueError(f"g2 must be non-negative; got {g2}.")
    return float(np.sqrt(P) * (1 - g2 / 2))


def heralded_arm_click_probability(bank, det_t, det_r, det_heralded, n_max=None,
                                   gate_transmission=1.0):
    """
    Probability of a click anywhere on the heralded arm when no herald fired.

    Parameters
    ----------
    gate_transmission: `float`
        Transmission of the switch on pulses without a herald: 1 without
        feed-forward, the extinction leakage with it.
    """
    n_max = _resolve_n_max(n_max)
    joint, photons = _joint_weights(bank, n_max)
    weights = joint * (1 - np.outer(click_coefficient(photons, det_t),
                                    det_r.no_click(photons)))
    total = math.fsum(weights.ravel())
    if total == 0:
        raise UndefinedMetricError("Every pulse is heralded, so the no-herald outcome "
                                   "is undefined.")
    arm = det_heralded.scaled(gate_transmission)
    idler = photons[:, np.newaxis] + photons[np.newaxis, :]
    return math.fsum((weights * click_coefficient(idler, arm)).ravel()) / total


def scale_noclick(p_click, klyshko):
    """
    Source-level no-click probability from a detected click probability,
    ``1 - p_click / klyshko``.

    Examples
    --------
    >>> scale_noclick(0.05, 0.5)  # doctest: +FLOAT_CMP
    0.9
    """
    if not 0 < klyshko <= 1:
        raise ValueError(f"The Klyshko efficiency must lie in (0, 1]; got {klyshko}.")
    if p_click > klyshko:
        raise InconsistentEfficiencyError(INCONSISTENT_EFFICIENCY_ERROR.format(p_click,
                                                                               klyshko))
    return 1 - p_click / klyshko


def p_noclick_given_no_herald(bank, det_heralded, klyshko, n_max=None, *,
                              det_t=PERFECT_DETECTOR, det_r=BLIND_DETECTOR,
                              extinction_db=None):
    """
    Probability that the source emits nothing into the heralded arm when no herald fires.

    Parameters
    ----------
    bank: `heraldsim.pdcstate.SqueezerBank`
    det_heralded: `DetectorModel`
        The heralded arm, D1 and D2 together.
    klyshko: `float`
        Klyshko efficiency the detected click probability is scaled by.
    n_max: `int`, optional
    det_t, det_r: `DetectorModel`
        Herald detectors defining the no-herald outcome.
    extinction_db: `float`, optional
        If given, feed-forward gating blocks the heralded arm on no-herald
        pulses down to this extinction.

    Raises
    ------
    `heraldsim.exceptions.InconsistentEfficiencyError`
        If the click probability exceeds ``klyshko``.
    """
    gate = 1.0 if extinction_db is None else extinction_transmission(extinction_db)
    p_click = heralded_arm_click_probability(bank, det_t, det_r, det_heralded, n_max,
                                             gate_transmission=gate)
    return scale_noclick(p_click, klyshko)


def source_fitness(p_herald, F, p_noclick):
    """
    Heralded single-photon fitness ``p * F + (1 - p) * p_noclick``.

    Examples
    --------
    >>> source_fitness(0.5, 0.8, 0.9)  # doctest: +FLOAT_CMP
    0.85
    """
    for name, value in (("p_herald", p_herald), ("F", F), ("p_noclick", p_noclick)):
        _check_probability(value, name, tolerance=ROUNDING_TOLERANCE)
    return p_herald * F + (1 - p_herald) * p_noclick


def p_herald_weak_pump(bank, det_t):
    """
    Second-order expansion of `p_herald` in the squeezing parameters,
    ``c0 + (c1 - c0) * sum(q_t**2)``.
    """
    c0, c1 = click_coefficient(0, det_t), click_coefficient(1, det_t)
    return float(c0 + (c1 - c0) * np.sum(bank.q_t ** 2))


def g2_weak_pump(bank, det_t, det_r=BLIND_DETECTOR):
    """
    Leading-order heralded g2, ``2 (c2/c1) S2 / T + 2 rho R``.

    ``T`` and ``R`` are the summed squared squeezing parameters of the two
    families, ``S2`` the sum of ``q_k**2 q_l**2`` over transmitted pairs
    ``k <= l`` and ``rho = 1 - eta_r`` the chance a reflected photon goes
    unnoticed. Valid for a dark-count-free herald detector.
    """
    squares_t = bank.q_t ** 2
    transmitted = np.sum(squares_t)
    reflected = np.sum(bank.q_r ** 2)
    c1, c2 = click_coefficient(1, det_t), click_coefficient(2, det_t)
    if transmitted == 0 or c1 == 0:
        raise UndefinedMetricError(NO_HERALD_ERROR)
    pairs = (transmitted ** 2 + np.sum(squares_t ** 2)) / 2
    rho = 1 - det_r.efficiency
    return float(2 * (c2 / c1) * pairs / transmitted + 2 * rho * reflected)


@dataclass(frozen=True)
class HeraldMetrics:
    """
    All metrics of one heralding scheme at one pump factor.

    ``p_herald`` is the transmitted-arm click probability; the rate of
    accepted heralds is `effective_herald_probability`. ``p_noclick`` and
    ``fitness`` are ``nan`` where the no-click scaling is inconsistent.
    """
    scheme: str
    B: float
    n_bar: float
    p_herald: float
    p_ext: float
    fidelity: float
    purity: float
    g2: float
    fidelity_approx: float
    p_noclick: float
    fitness: float
    mode_count: int
    n_max: int
    truncated: bool = False

    @property
    def effective_herald_probability(self):
        return self.p_herald * self.p_ext

    def as_row(self):
        """Values in `METRIC_COLUMNS` order."""
        values = asdict(self)
        return tuple(values[name] for name in METRIC_COLUMNS)


def _scheme_detectors(scheme, detectors):
    if scheme not in SCHEMES:
        raise ValueError(UNKNOWN_SCHEME_ERROR.format(scheme, ", ".join(SCHEMES)))
    if scheme in ("unfiltered", "standard"):
        return detectors.transmitted, BLIND_DETECTOR, None
    if scheme == "extended":
        return detectors.transmitted, detectors.reflected, None
    return detectors.transmitted, detectors.reflected, detectors.extinction_db


def evaluate_scheme(filtered, B, scheme, detectors, n_max=None, n_bar=None):
    """
    Evaluate every metric of one heralding scheme.

    Parameters
    ----------
    filtered: `heraldsim.spectra.FilteredSchmidt`
        Source partition for the scheme. The ``unfiltered`` scheme expects
        ``FilteredSchmidt.unfiltered(spectrum)``.
    B: `float`
        Pump factor.
    scheme: `str`
        One of `SCHEMES`.
    detectors: `DetectorSet`
    n_max: `int`, optional
    n_bar: `float`, optional
        Mean pair number to record. Defaults to that of the bank.

    Returns
    -------
    `HeraldMetrics`
    """
    n_max = _resolve_n_max(n_max)
    det_t, det_r, extinction_db = _scheme_detectors(scheme, detectors)
    bank = squeezer_bank(filtered, B)
    herald = p_herald(bank, det_t, n_max)
    extended = p_ext(bank, det_r, n_max)
    fidelity = heralded_fidelity(bank, det_t, det_r, n_max)
    purity = spectral_purity(bank)
    g2 = g2_heralded(bank, det_t, det_r, n_max)
    try:
        p_noclick = p_noclick_given_no_herald(bank, detectors.heralded, detectors.klyshko,
                                              n_max, det_t=det_t, det_r=det_r,
                                              extinction_db=extinction_db)
        fitness = source_fitness(herald * extended, fidelity, p_noclick)
    except InconsistentEfficiencyError as err:
        log.warning(f"{scheme} at B = {B:.6g}: {err}")
        p_noclick = fitness = float("nan")
    tail = 1.0 - math.fsum(family_count_distribution(bank.q, n_max))
    return HeraldMetrics(
        scheme=scheme, B=float(B),
        n_bar=mean_pair_number(bank) if n_bar is None else float(n_bar),
        p_herald=herald, p_ext=extended, fidelity=fidelity, purity=purity, g2=g2,
        fidelity_approx=fidelity_approx(purity, g2), p_noclick=p_noclick, fitness=fitness,
        mode_count=bank.mode_count, n_max=n_max,
        truncated=bool(tail > TAIL_TOLERANCE or filtered.truncated))


def calibrate_to_herald_probability(filtered, target, scheme, detectors, n_max=None):
    """
    Find the pump factor at which a scheme accepts heralds with probability ``target``.

    The accepted-herald probability ``p_herald * p_ext`` rises from its dark-count
    floor, and for extended heralding eventually falls again as the reflected
    detector vetoes more pulses. The root is searched on the rising branch.

    Returns
    -------
    `float`

    Raises
    ------
    `ValueError`
        If ``target`` is below the floor or above the largest reachable value.
    """
    n_max = _resolve_n_max(n_max)
    det_t, det_r, _ = _scheme_detectors(scheme, detectors)

    photons = np.arange(n_max + 1)

    def rate(B):
        bank = squeezer_bank(filtered, B)
        herald = math.fsum(family_count_distribution(bank.q_t, n_max)
                           * click_coefficient(photons, det_t))
        veto = math.fsum(family_count_distribution(bank.q_r, n_max) * det_r.no_click(photons))
        return herald * veto

    if not 0 < target < 1:
        raise ValueError(f"The target herald probability must lie in (0, 1); got {target}.")
    floor = rate(0.0)
    if target <= floor:
        raise ValueError(f"The target herald probability {target} is at or below the "
                         f"dark-count floor {floor:.6g}.")
    lower, previous = 0.0, floor
    upper = 1e-3
    while True:
        current = rate(upper)
        if current >= target:
            break
        if current < previous or upper > 10:
            raise ValueError(f"The {scheme} scheme cannot reach a herald probability of "
                             f"{target}; its maximum is about {max(previous, current):.6g}.")
        lower, previous = upper, current
        upper *= 1.5
    B = scipy.optimize.brentq(lambda B: rate(B) - target, lower, upper, xtol=1e-14,
                              rtol=1e-12)
    log.debug(f"Calibrated {scheme} pump factor B = {B:.8g} for herald probability {target}")
    return float(B)
