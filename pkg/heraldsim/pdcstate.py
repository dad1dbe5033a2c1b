"""
Banks of two-mode squeezers and the photon-number occupation patterns they produce.

Each Schmidt mode ``k`` of a filtered source is a two-mode squeezer with
parameter ``q_k = B * lambda_k``. Its photon-pair number is thermal,
``P(n) = (1 - mu) * mu**n`` with ``mu = tanh(q)**2``, and different modes are
independent. Every observable the package needs is diagonal in photon number,
so the state is fully described by these per-mode distributions.
"""
import math
import textwrap
from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.stats

from heraldsim.exceptions import ModeCountError, UndefinedMetricError
from heraldsim.logger import log

__all__ = ["SqueezerBank", "OccupationPattern", "WeightedPattern", "squeezer_bank",
           "mean_pair_number", "calibrate_pump_factor", "enumerate_patterns",
           "count_patterns", "sum_pattern_weights", "family_count_distribution",
           "pattern_tail_weight", "pattern_tail_bound", "unconditional_g2",
           "MAX_ENUMERATED_MODES"]

MAX_ENUMERATED_MODES = 64

SQUEEZING_ERROR = ("Squeezing parameters of the {} family must be finite, "
                   "non-negative and non-increasing.")
PUMP_FACTOR_ERROR = "The pump factor B must be non-negative and finite; got {}."
TARGET_ERROR = "The target mean pair number must be positive and finite; got {}."
EMPTY_SPECTRUM_ERROR = "Cannot calibrate a pump factor for a source with no nonzero coefficients."
MODE_COUNT_ERROR = ("Pattern enumeration supports at most {} modes; the bank has {}. "
                    "Use family_count_distribution for large banks.")


def _check_family(values, family):
    values = np.array(values, dtype=float).ravel()
    if (not np.all(np.isfinite(values)) or np.any(values < 0)
            or np.any(np.diff(values) > 0)):
        raise ValueError(SQUEEZING_ERROR.format(family))
    values.setflags(write=False)
    return values


class SqueezerBank:
    """
    Squeezing parameters of the transmitted and reflected mode families.

    Parameters
    ----------
    q_t: array-like
        Transmitted-family squeezing parameters, non-increasing.
    q_r: array-like, optional
        Reflected-family squeezing parameters, non-increasing.
    B: `float`, optional
        Pump factor the bank was built with, if known.
    schmidt_t, schmidt_r: array-like, optional
        The unscaled coefficients ``q / B``. Kept so that scale-free quantities
        do not depend on ``B`` at all.
    """

    def __init__(self, q_t, q_r=(), B=None, schmidt_t=None, schmidt_r=None):
        self.q_t = _check_family(q_t, "transmitted")
        self.q_r = _check_family(q_r, "reflected")
        self.B = None if B is None else float(B)
        self.schmidt_t = None if schmidt_t is None else _check_family(schmidt_t, "transmitted")
        self.schmidt_r = None if schmidt_r is None else _check_family(schmidt_r, "reflected")

    @property
    def q(self):
        """All squeezing parameters, transmitted family first."""
        return np.concatenate([self.q_t, self.q_r])

    @property
    def mode_count(self):
        return len(self.q_t) + len(self.q_r)

    @property
    def mu_t(self):
        """Thermal ratios ``tanh(q)**2`` of the transmitted family."""
        return np.tanh(self.q_t) ** 2

    @property
    def mu_r(self):
        """Thermal ratios ``tanh(q)**2`` of the reflected family."""
        return np.tanh(self.q_r) ** 2

    @property
    def vacuum_probability(self):
        """Probability that no mode holds a pair."""
        return float(np.prod(1 / np.cosh(self.q) ** 2))

    def as_dict(self):
        """
        Text form of the bank, used in scenario ``[derived]`` sections and stream headers.
        """
        return {"B": repr(self.B) if self.B is not None else "",
                "q_t": ", ".join(repr(float(q)) for q in self.q_t),
                "q_r": ", ".join(repr(float(q)) for q in self.q_r)}

    @classmethod
    def from_dict(cls, values):
        """
        Inverse of `as_dict`.
        """
        def parse(text):
            text = text.strip()
            return [float(item) for item in text.split(",")] if text else []

        B = values.get("B", "").strip()
        return cls(parse(values.get("q_t", "")), parse(values.get("q_r", "")),
                   float(B) if B else None)

    def __eq__(self, other):
        if not isinstance(other, SqueezerBank):
            return NotImplemented
        return (np.array_equal(self.q_t, other.q_t) and np.array_equal(self.q_r, other.q_r)
                and self.B == other.B)

    def __str__(self):
        return textwrap.dedent(f"""\
                SqueezerBank
                ------------
                Pump factor B:\t\t{self.B}
                Transmitted modes:\t{len(self.q_t)}
                Reflected modes:\t{len(self.q_r)}
                Mean pair number:\t{mean_pair_number(self):.6g}""")

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


@dataclass(frozen=True)
class OccupationPattern:
    """
    Photon counts per mode for one term of the photon-number expansion.
    """
    transmitted: tuple
    reflected: tuple = ()

    @property
    def n_t(self):
        return sum(self.transmitted)

    @property
    def n_r(self):
        return sum(self.reflected)

    @property
    def n_tot(self):
        return self.n_t + self.n_r


@dataclass(frozen=True)
class WeightedPattern:
    pattern: OccupationPattern
    weight: float


def squeezer_bank(fs, B):
    """
    Scale the Schmidt coefficients of a filtered source by the pump factor.

    Parameters
    ----------
    fs: `heraldsim.spectra.FilteredSchmidt`
    B: `float`
        Pump factor, ``B >= 0``.

    Returns
    -------
    `SqueezerBank`

    Examples
    --------
    >>> from heraldsim.spectra import FilteredSchmidt
    >>> bank = squeezer_bank(FilteredSchmidt([0.6], [0.8]), 0.5)
    >>> bank.q_t, bank.q_r  # doctest: +FLOAT_CMP
    (array([0.3]), array([0.4]))
    """
    B = float(B)
    if not np.isfinite(B) or B < 0:
        raise ValueError(PUMP_FACTOR_ERROR.format(B))
    return SqueezerBank(B * fs.transmitted, B * fs.reflected, B,
                        schmidt_t=fs.transmitted, schmidt_r=fs.reflected)


def mean_pair_number(bank):
    """
    Mean number of pairs over both families, the sum of ``sinh(q)**2``.
    """
    return math.fsum(np.sinh(bank.q) ** 2)


def calibrate_pump_factor(fs, target_n):
    """
    Find the pump factor giving a mean pair number of ``target_n``.

    The mean pair number is strictly increasing in ``B``, so the root is
    bracketed between 0 and the value at which the strongest mode alone reaches
    the target, then refined with `scipy.optimize.brentq`.

    Parameters
    ----------
    fs: `heraldsim.spectra.FilteredSchmidt`
    target_n: `float`
        Desired mean pair number, positive.

    Returns
    -------
    `float`
    """
    target_n = float(target_n)
    if not np.isfinite(target_n) or target_n <= 0:
        raise ValueError(TARGET_ERROR.format(target_n))
    coefficients = np.concatenate([fs.transmitted, fs.reflected])
    if not np.any(coefficients > 0):
        raise ValueError(EMPTY_SPECTRUM_ERROR)

    def excess(B):
        return math.fsum(np.sinh(B * coefficients) ** 2) - target_n

    upper = np.arcsinh(np.sqrt(target_n)) / coefficients.max()
    if excess(upper) == 0:
        return float(upper)
    B = scipy.optimize.brentq(excess, 0.0, upper, xtol=upper * 1e-15, rtol=1e-15,
                              maxiter=500)
    log.debug(f"Calibrated pump factor B = {B!r} for mean pair number {target_n}")
    return float(B)


def _compositions(n_modes, budget):
    """Lexicographic tuples of ``n_modes`` non-negative counts summing to at most ``budget``."""
    if n_modes == 0:
        yield ()
        return
    for count in range(budget + 1):
        for rest in _compositions(n_modes - 1, budget - count):
            yield (count,) + rest


def enumerate_patterns(bank, n_max):
    """
    Every occupation pattern with at most ``n_max`` photons, with its probability.

    Patterns are produced in lexicographic order of their per-mode counts,
    transmitted family first, so sums over them are reproducible.

    Parameters
    ----------
    bank: `SqueezerBank`
    n_max: `int`
        Largest total photon number kept.

    Yields
    ------
    `WeightedPattern`

    Raises
    ------
    `heraldsim.exceptions.ModeCountError`
        If the bank has more than `MAX_ENUMERATED_MODES` modes.
    """
    if bank.mode_count > MAX_ENUMERATED_MODES:
        raise ModeCountError(MODE_COUNT_ERROR.format(MAX_ENUMERATED_MODES, bank.mode_count))
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative; got {n_max}.")
    mu = np.tanh(bank.q) ** 2
    vacuum = bank.vacuum_probability
    n_transmitted = len(bank.q_t)
    for counts in _compositions(bank.mode_count, int(n_max)):
        weight = vacuum * math.prod(float(m) ** n for m, n in zip(mu, counts))
        pattern = OccupationPattern(counts[:n_transmitted], counts[n_transmitted:])
        yield WeightedPattern(pattern, weight)


def count_patterns(mode_count, n_max):
    """Number of patterns `enumerate_patterns` yields, ``C(n_max + modes, modes)``."""
    return math.comb(n_max + mode_count, mode_count)


def sum_pattern_weights(patterns):
    """Compensated sum of the weights of an iterable of `WeightedPattern`."""
    return math.fsum(item.weight for item in patterns)


def family_count_distribution(q, n_max):
    """
    Distribution of the total photon number of independent thermal modes.

    This is the pattern sum of `enumerate_patterns` grouped by total photon
    number, computed by convolving the per-mode geometric distributions and
    discarding everything above ``n_max`` after each step.

    Parameters
    ----------
    q: array-like
        Squeezing parameters of the modes.
    n_max: `int`
        Largest photon number kept.

    Returns
    -------
    `numpy.ndarray`
        ``n_max + 1`` probabilities for 0 to ``n_max`` photons.

    Examples
    --------
    >>> family_count_distribution([0.0, 0.0], 2)  # doctest: +FLOAT_CMP
    array([1., 0., 0.])
    """
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative; got {n_max}.")
    photons = np.arange(int(n_max) + 1)
    distribution = np.zeros(len(photons))
    distribution[0] = 1.0
    for mu in np.tanh(np.asarray(q, dtype=float)) ** 2:
        # scipy's geometric distribution starts at 1, the pair number at 0.
        mode = scipy.stats.geom.pmf(photons + 1, 1 - mu)
        distribution = np.convolve(distribution, mode)[:len(photons)]
    return distribution


def pattern_tail_weight(bank, n_max):
    """
    Probability carried by patterns with more than ``n_max`` photons in total.
    """
    return max(0.0, 1.0 - math.fsum(family_count_distribution(bank.q, n_max)))


def pattern_tail_bound(bank, n_max):
    """
    Chernoff upper bound on `pattern_tail_weight`.

    The total photon number ``n`` has generating function
    ``prod((1 - mu) / (1 - mu * z))``, so ``P(n > n_max)`` is at most that
    product divided by ``z**(n_max + 1)`` for any ``1 <= z < 1 / max(mu)``.
    The bound is minimized over ``z``.
    """
    mu = np.tanh(bank.q) ** 2
    mu = mu[mu > 0]
    if len(mu) == 0:
        return 0.0

    def log_bound(t):
        return (np.sum(np.log1p(-mu) - np.log1p(-mu * np.exp(t)))
                - (n_max + 1) * t)

    t_max = -np.log(mu.max())
    result = scipy.optimize.minimize_scalar(log_bound, bounds=(0.0, t_max * (1 - 1e-9)),
                                            method="bounded")
    return float(min(1.0, np.exp(min(result.fun, 0.0))))


def unconditional_g2(bank, n_max):
    """
    Second-order correlation of the total idler photon number with no heralding.

    Computed from the truncated photon-number distribution of all modes.
    For ``M`` equal weak modes this tends to ``1 + 1/M``.
    """
    distribution = family_count_distribution(bank.q, n_max)
    photons = np.arange(len(distribution))
    total = math.fsum(distribution)
    mean = math.fsum(photons * distribution) / total
    if mean == 0:
        raise UndefinedMetricError("The bank holds no photons, so g2 is undefined.")
    factorial = math.fsum(photons * (photons - 1) * distribution) / total
    return factorial / mean ** 2
