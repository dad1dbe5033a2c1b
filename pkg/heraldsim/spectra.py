"""
Joint spectral amplitudes of a pulsed pair source, their Schmidt decomposition
and their partition by a spectral filter in the heralding arm.

All frequencies are detunings from the degenerate centre frequency and are
held internally as angular frequencies in rad/s. User-facing constructors
accept `astropy.units.Quantity` objects in Hz (ordinary frequency) or rad/s.
"""
import textwrap
import warnings

import astropy.units as u
import numpy as np
import scipy.linalg
from astropy.table import Table

from heraldsim.config import conf
from heraldsim.exceptions import DegenerateJSAError, TruncationWarning
from heraldsim.logger import log

__all__ = ["FrequencyGrid", "PumpSpec", "PhaseMatchSpec", "FilterSpec", "JsaMatrix",
           "SchmidtSpectrum", "FilteredSchmidt", "build_jsa", "default_grid",
           "schmidt_decompose", "partition_by_filter", "filtered_schmidt", "filter_mask",
           "FILTER_SHAPES", "MIN_GRID_BINS", "SINGULAR_VALUE_FLOOR",
           "DISCARDED_WEIGHT_TOLERANCE"]

MIN_GRID_BINS = 16
GRID_STEP_TOLERANCE = 1e-9
SINGULAR_VALUE_FLOOR = 1e-8
DISCARDED_WEIGHT_TOLERANCE = 1e-3

GRID_LENGTH_ERROR = "Frequency axes need at least {} bins; got {}."
GRID_ORDER_ERROR = "Frequency offsets must be finite and strictly increasing."
GRID_STEP_ERROR = "Frequency offsets must be uniformly spaced to within 1 part in 1e9."
NONPOSITIVE_ERROR = "{} must be positive and finite; got {}."
DEGENERATE_JSA_ERROR = ("The joint spectral amplitude is zero everywhere on the grid. "
                        "Check that the grid covers the pump and phase-matching support.")
UNKNOWN_SHAPE_ERROR = "Unknown {} shape {!r}. Supported shapes: {}."
AMPLITUDE_SHAPE_ERROR = "Amplitude matrix shape {} does not match grid shape {}."


def _to_angular(value, name="value"):
    """
    Convert a frequency to angular frequency in rad/s.

    Plain numbers are taken to be rad/s already. Quantities in Hz are multiplied
    by 2 pi; quantities in rad/s are passed through.
    """
    if not isinstance(value, u.Quantity):
        return np.asarray(value, dtype=float)
    if value.unit.is_equivalent(u.Hz):
        return 2 * np.pi * value.to_value(u.Hz)
    if value.unit.is_equivalent(u.rad / u.s):
        return value.to_value(u.rad / u.s)
    raise u.UnitsError(f"{name} must be a frequency (Hz) or angular frequency (rad/s); "
                       f"got unit {value.unit}.")


def _check_axis(offsets):
    offsets = np.array(offsets, dtype=float)
    if offsets.ndim != 1 or len(offsets) < MIN_GRID_BINS:
        raise ValueError(GRID_LENGTH_ERROR.format(MIN_GRID_BINS, offsets.size))
    steps = np.diff(offsets)
    if not np.all(np.isfinite(offsets)) or np.any(steps <= 0):
        raise ValueError(GRID_ORDER_ERROR)
    if np.max(np.abs(steps - steps.mean())) > GRID_STEP_TOLERANCE * steps.mean():
        raise ValueError(GRID_STEP_ERROR)
    offsets.setflags(write=False)
    return offsets


class FrequencyGrid:
    """
    Uniform rectangular grid of signal and idler detunings.

    Parameters
    ----------
    signal_offsets: array-like or `astropy.units.Quantity`
        Bin centres of the heralding (signal) axis. Plain numbers are in rad/s.
    idler_offsets: array-like or `astropy.units.Quantity`, optional
        Bin centres of the heralded (idler) axis. Defaults to ``signal_offsets``.
    """

    def __init__(self, signal_offsets, idler_offsets=None):
        self._signal = _check_axis(_to_angular(signal_offsets, "signal_offsets"))
        if idler_offsets is None:
            self._idler = self._signal
        else:
            self._idler = _check_axis(_to_angular(idler_offsets, "idler_offsets"))

    @classmethod
    def symmetric(cls, bins, half_span):
        """
        Square grid of ``bins`` bin centres spanning ``[-half_span, half_span]``.
        """
        half_span = float(_to_angular(half_span, "half_span"))
        if not np.isfinite(half_span) or half_span <= 0:
            raise ValueError(NONPOSITIVE_ERROR.format("half_span", half_span))
        return cls(np.linspace(-half_span, half_span, int(bins)))

    @property
    def signal_offsets(self):
        """Signal-axis bin centres in rad/s."""
        return self._signal

    @property
    def idler_offsets(self):
        """Idler-axis bin centres in rad/s."""
        return self._idler

    @property
    def shape(self):
        return (len(self._signal), len(self._idler))

    @property
    def signal_step(self):
        return float(self._signal[1] - self._signal[0])

    @property
    def idler_step(self):
        return float(self._idler[1] - self._idler[0])

    @property
    def cell_area(self):
        """Area of one grid cell in (rad/s)**2."""
        return self.signal_step * self.idler_step

    def __eq__(self, other):
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return (np.array_equal(self._signal, other._signal)
                and np.array_equal(self._idler, other._idler))

    def __str__(self):
        return (f"FrequencyGrid {self.shape[0]}x{self.shape[1]}, "
                f"signal step {self.signal_step / (2 * np.pi) / 1e9:.4g} GHz, "
                f"idler step {self.idler_step / (2 * np.pi) / 1e9:.4g} GHz")

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


class PumpSpec:
    """
    Pulsed pump description.

    Parameters
    ----------
    center_wavelength: `astropy.units.Quantity`
        Pump centre wavelength.
    spectral_width: `astropy.units.Quantity`
        Standard deviation of the Gaussian pump amplitude envelope, as an
        ordinary frequency.
    shape: `str`
        Envelope shape. Only ``"gaussian"`` is supported.
    """
    SHAPES = ("gaussian",)

    @u.quantity_input(center_wavelength=u.m, spectral_width=u.Hz)
    def __init__(self, center_wavelength, spectral_width, shape="gaussian"):
        if shape not in self.SHAPES:
            raise ValueError(UNKNOWN_SHAPE_ERROR.format("pump", shape, ", ".join(self.SHAPES)))
        for name, value in (("center_wavelength", center_wavelength),
                            ("spectral_width", spectral_width)):
            if not np.isfinite(value.value) or value.value <= 0:
                raise ValueError(NONPOSITIVE_ERROR.format(name, value))
        self.center_wavelength = center_wavelength
        self.spectral_width = spectral_width
        self.shape = shape

    @property
    def sigma(self):
        """Envelope standard deviation in rad/s."""
        return 2 * np.pi * self.spectral_width.to_value(u.Hz)

    def envelope(self, sum_offsets):
        """Pump envelope evaluated at signal + idler detunings (rad/s)."""
        return np.exp(-np.square(sum_offsets) / (2 * self.sigma ** 2))

    def __repr__(self):
        return (f"PumpSpec(center_wavelength={self.center_wavelength}, "
                f"spectral_width={self.spectral_width}, shape={self.shape!r})")


class PhaseMatchSpec:
    """
    Sinc phase-matching function.

    Parameters
    ----------
    inverse_width: `astropy.units.Quantity`
        Time constant setting the width of the phase-matching sinc.
    slope: `float`
        Ratio of the idler to signal group-velocity mismatch. 1 gives a
        phase-matching ridge along signal = idler.
    """

    @u.quantity_input(inverse_width=u.s)
    def __init__(self, inverse_width, slope=1.0):
        if not np.isfinite(inverse_width.value) or inverse_width.value <= 0:
            raise ValueError(NONPOSITIVE_ERROR.format("inverse_width", inverse_width))
        if not np.isfinite(slope):
            raise ValueError(f"slope must be finite; got {slope}.")
        self.inverse_width = inverse_width
        self.slope = float(slope)

    @property
    def tau(self):
        """Time constant in seconds."""
        return self.inverse_width.to_value(u.s)

    def amplitude(self, signal_offsets, idler_offsets):
        mismatch = signal_offsets - self.slope * idler_offsets
        # np.sinc is the normalized sinc, so this is sin(tau*mismatch/2) / (tau*mismatch/2).
        return np.sinc(self.tau * mismatch / (2 * np.pi))

    def __repr__(self):
        return f"PhaseMatchSpec(inverse_width={self.inverse_width}, slope={self.slope})"


def _rectangular(offsets, center, width):
    if width <= 0:
        return np.zeros(offsets.shape, dtype=bool)
    return np.abs(offsets - center) <= width / 2


FILTER_SHAPES = {"rectangular": _rectangular}


class FilterSpec:
    """
    Spectral filter placed in the heralding arm.

    Parameters
    ----------
    center: `astropy.units.Quantity` or `float`
        Centre detuning. Plain numbers are in rad/s.
    width: `astropy.units.Quantity` or `float`
        Full passband width. Plain numbers are in rad/s. A width of zero passes nothing.
    shape: `str`
        Passband shape, one of `FILTER_SHAPES`.
    """

    def __init__(self, center, width, shape="rectangular"):
        if shape not in FILTER_SHAPES:
            raise ValueError(UNKNOWN_SHAPE_ERROR.format("filter", shape,
                                                        ", ".join(FILTER_SHAPES)))
        self.center = float(_to_angular(center, "center"))
        self.width = float(_to_angular(width, "width"))
        if not np.isfinite(self.center):
            raise ValueError(f"Filter center must be finite; got {center}.")
        if not np.isfinite(self.width) or self.width < 0:
            raise ValueError(f"Filter width must be non-negative and finite; got {width}.")
        self.shape = shape

    def __repr__(self):
        return (f"FilterSpec(center={self.center / (2 * np.pi) / 1e9:.6g} GHz, "
                f"width={self.width / (2 * np.pi) / 1e9:.6g} GHz, shape={self.shape!r})")


def filter_mask(offsets, filter_spec):
    """
    Boolean passband membership of each bin centre in ``offsets`` (rad/s).
    """
    return FILTER_SHAPES[filter_spec.shape](np.asarray(offsets), filter_spec.center,
                                            filter_spec.width)


class JsaMatrix:
    """
    Joint spectral amplitude sampled on a `FrequencyGrid`.

    Rows index the signal (heralding) detuning, columns the idler detuning.

    Parameters
    ----------
    grid: `FrequencyGrid`
        Sampling grid.
    amplitudes: array-like
        Complex amplitudes of shape ``grid.shape``. The array is copied and
        frozen.
    """

    def __init__(self, grid, amplitudes):
        amplitudes = np.array(amplitudes, dtype=complex)
        if amplitudes.shape != grid.shape:
            raise ValueError(AMPLITUDE_SHAPE_ERROR.format(amplitudes.shape, grid.shape))
        if not np.all(np.isfinite(amplitudes)):
            raise ValueError("Amplitudes must be finite.")
        amplitudes.setflags(write=False)
        self.grid = grid
        self.amplitudes = amplitudes

    @property
    def intensity(self):
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self):
        """Integrated intensity, sum of |f|**2 times the cell area."""
        return float(np.sum(self.intensity) * self.grid.cell_area)

    def normalized(self):
        """
        Copy scaled to unit norm.

        Raises
        ------
        `heraldsim.exceptions.DegenerateJSAError`
            If the amplitude is zero everywhere.
        """
        norm = self.norm
        if norm == 0:
            raise DegenerateJSAError(DEGENERATE_JSA_ERROR)
        return JsaMatrix(self.grid, self.amplitudes / np.sqrt(norm))

    def singular_values(self):
        """
        Singular values of the amplitude matrix weighted by the cell measure.

        Their squares sum to `norm`.
        """
        if not np.any(self.amplitudes):
            return np.zeros(0)
        return scipy.linalg.svdvals(self.amplitudes * np.sqrt(self.grid.cell_area),
                                    check_finite=False)

    def write_csv(self, path):
        """
        Write ``|f|**2`` as one row per grid cell.

        Columns are ``signal_offset_hz``, ``idler_offset_hz`` and ``intensity``,
        with offsets given as ordinary frequencies.
        """
        signal, idler = np.meshgrid(self.grid.signal_offsets, self.grid.idler_offsets,
                                    indexing="ij")
        table = Table([signal.ravel() / (2 * np.pi), idler.ravel() / (2 * np.pi),
                       self.intensity.ravel()],
                      names=("signal_offset_hz", "idler_offset_hz", "intensity"))
        table.write(path, format="ascii.csv", overwrite=True)
        log.info(f"Wrote joint spectral intensity to {path}")

    def __str__(self):
        return textwrap.dedent(f"""\
                JsaMatrix
                ---------
                Grid shape:\t\t{self.grid.shape}
                Norm:\t\t\t{self.norm:.6g}
                Peak |f|^2:\t\t{self.intensity.max():.6g}""")

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


def default_grid(pump, bins=512, span_factor=6):
    """
    Square grid spanning ``span_factor`` pump widths either side of degeneracy.

    The span follows the pump alone. A phase-matching sinc much wider than the
    pump is clipped by the grid; one much narrower needs a larger ``bins``.
    """
    if span_factor <= 0:
        raise ValueError(NONPOSITIVE_ERROR.format("span_factor", span_factor))
    half_span = span_factor * pump.sigma
    return FrequencyGrid.symmetric(bins, half_span)


def build_jsa(pump, phase_matching, grid):
    """
    Sample the joint spectral amplitude and normalize it to unit norm.

    Parameters
    ----------
    pump: `PumpSpec`
    phase_matching: `PhaseMatchSpec`
    grid: `FrequencyGrid`

    Returns
    -------
    `JsaMatrix`

    Raises
    ------
    `heraldsim.exceptions.DegenerateJSAError`
        If the amplitude vanishes on the whole grid.
    """
    signal, idler = np.meshgrid(grid.signal_offsets, grid.idler_offsets, indexing="ij")
    amplitudes = pump.envelope(signal + idler) * phase_matching.amplitude(signal, idler)
    return JsaMatrix(grid, amplitudes).normalized()


def _truncate(values, max_modes):
    values = np.asarray(values, dtype=float)
    values = values[values >= SINGULAR_VALUE_FLOOR]
    order = np.argsort(-values, kind="stable")
    kept = values[order][:max_modes]
    discarded = max(0.0, float(np.sum(values ** 2) - np.sum(kept ** 2)))
    kept.setflags(write=False)
    return kept, discarded


class SchmidtSpectrum:
    """
    Schmidt coefficients of one joint spectral amplitude.

    Parameters
    ----------
    coefficients: array-like
        Non-increasing, non-negative Schmidt coefficients.
    discarded_weight: `float`
        Squared weight of the singular values dropped by truncation.
    """

    def __init__(self, coefficients, discarded_weight=0.0):
        coefficients = np.array(coefficients, dtype=float)
        if np.any(coefficients < 0) or np.any(np.diff(coefficients) > 0):
            raise ValueError("Schmidt coefficients must be non-negative and non-increasing.")
        coefficients.setflags(write=False)
        self.coefficients = coefficients
        self.discarded_weight = float(discarded_weight)

    def __len__(self):
        return len(self.coefficients)

    @property
    def truncated(self):
        return self.discarded_weight > DISCARDED_WEIGHT_TOLERANCE

    @property
    def weight(self):
        return float(np.sum(self.coefficients ** 2))

    @property
    def schmidt_number(self):
        """Effective number of modes, ``(sum l**2)**2 / sum l**4``."""
        return self.weight ** 2 / float(np.sum(self.coefficients ** 4))

    @property
    def purity(self):
        return 1 / self.schmidt_number

    def __str__(self):
        return textwrap.dedent(f"""\
                SchmidtSpectrum
                ---------------
                Modes kept:\t\t{len(self)}
                Schmidt number:\t\t{self.schmidt_number:.4f}
                Discarded weight:\t{self.discarded_weight:.3g}""")

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


def schmidt_decompose(jsa, max_modes=None):
    """
    Schmidt coefficients of a joint spectral amplitude.

    The amplitude is normalized first. Singular values below
    `SINGULAR_VALUE_FLOOR` are dropped and at most ``max_modes`` are kept.

    Parameters
    ----------
    jsa: `JsaMatrix`
    max_modes: `int`, optional
        Defaults to ``heraldsim.conf.max_modes``.

    Returns
    -------
    `SchmidtSpectrum`
    """
    if max_modes is None:
        max_modes = conf.max_modes
    if max_modes < 1:
        raise ValueError(f"max_modes must be at least 1; got {max_modes}.")
    coefficients, discarded = _truncate(jsa.normalized().singular_values(), max_modes)
    spectrum = SchmidtSpectrum(coefficients, discarded)
    log.debug(f"Schmidt decomposition kept {len(spectrum)} modes, "
              f"K = {spectrum.schmidt_number:.4f}")
    if spectrum.truncated:
        warnings.warn(f"Keeping {max_modes} Schmidt modes discards "
                      f"{discarded:.3g} of the spectral weight.", TruncationWarning)
    return spectrum


def partition_by_filter(jsa, filter_spec):
    """
    Split a joint spectral amplitude into the parts the heralding filter
    transmits and reflects.

    Rows whose signal bin centre lies in the passband go to the transmitted
    part; all others go to the reflected part. Neither part is renormalized.

    Returns
    -------
    transmitted, reflected: `JsaMatrix`
    """
    passband = filter_mask(jsa.grid.signal_offsets, filter_spec)[:, np.newaxis]
    transmitted = np.where(passband, jsa.amplitudes, 0)
    reflected = np.where(passband, 0, jsa.amplitudes)
    return JsaMatrix(jsa.grid, transmitted), JsaMatrix(jsa.grid, reflected)


class FilteredSchmidt:
    """
    Schmidt coefficients of the transmitted and reflected parts of one filtered source.

    The two families are not renormalized, so the sum of all squared coefficients
    is the part of the source weight that survived truncation.

    Parameters
    ----------
    transmitted: array-like
        Coefficients of the part the heralding filter passes.
    reflected: array-like
        Coefficients of the part the filter reflects.
    discarded_weight: `float`
        Squared weight dropped by truncation in both families together.
    """

    def __init__(self, transmitted, reflected=(), discarded_weight=0.0):
        self.transmitted = SchmidtSpectrum(transmitted).coefficients
        self.reflected = SchmidtSpectrum(reflected).coefficients
        self.discarded_weight = float(discarded_weight)

    @classmethod
    def unfiltered(cls, spectrum):
        """
        View of an unfiltered source: everything is transmitted, nothing reflected.
        """
        return cls(spectrum.coefficients, (), spectrum.discarded_weight)

    @property
    def truncated(self):
        return self.discarded_weight > DISCARDED_WEIGHT_TOLERANCE

    @property
    def transmitted_fraction(self):
        """Share of the source weight passed by the filter."""
        t = np.sum(self.transmitted ** 2)
        total = t + np.sum(self.reflected ** 2)
        return float(t / total) if total > 0 else 0.0

    def __str__(self):
        return textwrap.dedent(f"""\
                FilteredSchmidt
                ---------------
                Transmitted modes:\t{len(self.transmitted)}
                Reflected modes:\t{len(self.reflected)}
                Transmitted weight:\t{self.transmitted_fraction:.4g}
                Discarded weight:\t{self.discarded_weight:.3g}""")

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


def filtered_schmidt(jsa_t, jsa_r, max_modes=None):
    """
    Schmidt coefficients of the transmitted and reflected parts of a partitioned source.

    Parameters
    ----------
    jsa_t, jsa_r: `JsaMatrix`
        The two outputs of `partition_by_filter`, unnormalized.
    max_modes: `int`, optional
        Modes kept per family. Defaults to ``heraldsim.conf.max_modes``.

    Returns
    -------
    `FilteredSchmidt`
    """
    if max_modes is None:
        max_modes = conf.max_modes
    if max_modes < 1:
        raise ValueError(f"max_modes must be at least 1; got {max_modes}.")
    transmitted, discarded_t = _truncate(jsa_t.singular_values(), max_modes)
    reflected, discarded_r = _truncate(jsa_r.singular_values(), max_modes)
    result = FilteredSchmidt(transmitted, reflected, discarded_t + discarded_r)
    log.debug(f"Filtered source: {len(transmitted)} transmitted and "
              f"{len(reflected)} reflected modes, transmitted fraction "
              f"{result.transmitted_fraction:.4g}")
    if result.truncated:
        warnings.warn(f"Keeping {max_modes} modes per family discards "
                      f"{result.discarded_weight:.3g} of the filtered weight.",
                      TruncationWarning)
    return result
