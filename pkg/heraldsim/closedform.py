"""
Closed-form photon statistics of products of two-mode squeezers.

These use the thermal generating function ``E[x**n] = (1 - mu) / (1 - mu * x)``
directly and share no code with the pattern sums in `heraldsim.pdcstate`, so
they serve as an independent check on them.
"""
import numpy as np

__all__ = ["noclick_closed", "unconditional_moments"]


def noclick_closed(q_family, det):
    """
    Probability that a detector sees no click from a family of thermal modes.

    Parameters
    ----------
    q_family: array-like
        Squeezing parameters of the modes reaching the detector.
    det: `heraldsim.heralding.DetectorModel`

    Returns
    -------
    `float`
        ``(1 - d) * prod((1 - mu) / (1 - mu * (1 - eta)))``.

    Examples
    --------
    >>> from heraldsim.heralding import DetectorModel
    >>> noclick_closed([0.2], DetectorModel(1.0, 0.0))  # doctest: +FLOAT_CMP
    0.9610429829661166
    """
    mu = np.tanh(np.asarray(q_family, dtype=float)) ** 2
    miss = 1 - det.efficiency
    return float((1 - det.dark_probability) * np.prod((1 - mu) / (1 - mu * miss)))


def unconditional_moments(q_family):
    """
    Mean and second factorial moment of the total photon number of a family.

    Returns
    -------
    mean, factorial: `float`
        ``<n>`` and ``<n(n-1)>``.
    """
    mu = np.tanh(np.asarray(q_family, dtype=float)) ** 2
    means = mu / (1 - mu)
    mean = float(np.sum(means))
    # Each thermal mode contributes 2<n_k>**2; distinct modes contribute <n_j><n_k>.
    factorial = float(2 * np.sum(means ** 2) + (mean ** 2 - np.sum(means ** 2)))
    return mean, factorial
