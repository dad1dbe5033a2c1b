"""
Scenario files: the source, filter, truncation and run parameters of one study.

A scenario is an INI file read with `configparser`. Dimensional values carry
their unit and are parsed with `astropy.units.Quantity`::

    [pump]
    center_wavelength = 777.24 nm
    spectral_width = 53 GHz

The full schema, with defaults, is in ``heraldsim/data/reference.cfg``.
"""
import configparser
import hashlib
import os
from dataclasses import dataclass
from functools import cached_property

import astropy.units as u
import numpy as np

from heraldsim.config import conf
from heraldsim.exceptions import ScenarioConfigError
from heraldsim.heralding import DetectorModel, DetectorSet
from heraldsim.logger import log
from heraldsim.pdcstate import SqueezerBank
from heraldsim.spectra import (FilteredSchmidt, FilterSpec, PhaseMatchSpec, PumpSpec,
                               build_jsa, default_grid, filtered_schmidt,
                               partition_by_filter, schmidt_decompose)

__all__ = ["Scenario", "LossPreset", "PRESETS", "SCHEMA", "REFERENCE_SCENARIO_PATH"]

REFERENCE_SCENARIO_PATH = os.path.join(os.path.dirname(__file__), "data", "reference.cfg")

UNKNOWN_SECTION_ERROR = "unknown section; expected one of {}"
UNKNOWN_KEY_ERROR = "unknown key; expected one of {}"
MISSING_KEY_ERROR = "required key is missing"
UNIT_ERROR = "expected a quantity convertible to {}; got {!r}"
RANGE_ERROR = "value {!r} is out of range: {}"

REQUIRED = object()


@dataclass(frozen=True)
class _Field:
    kind: str
    default: object = REQUIRED
    unit: object = None
    check: object = None
    description: str = ""


def _positive(value):
    return value > 0


def _non_negative(value):
    return value >= 0


def _probability(value):
    return 0 <= value <= 1


def _dark(value):
    return 0 <= value < 1


SCHEMA = {
    "scenario": {
        "name": _Field("str", "custom"),
        "stand_in": _Field("bool", False),
    },
    "pump": {
        "center_wavelength": _Field("quantity", REQUIRED, u.nm, _positive, "> 0"),
        "spectral_width": _Field("quantity", REQUIRED, u.GHz, _positive, "> 0"),
        "shape": _Field("str", "gaussian"),
    },
    "phase_matching": {
        "inverse_width": _Field("quantity", REQUIRED, u.ps, _positive, "> 0"),
        "slope": _Field("float", 1.0),
    },
    "grid": {
        "bins": _Field("int", 512, None, lambda value: value >= 16, ">= 16"),
        "span_factor": _Field("float", 6.0, None, _positive, "> 0"),
    },
    "filter": {
        "center": _Field("quantity", 0 * u.GHz, u.GHz),
        "width": _Field("quantity", REQUIRED, u.GHz, _non_negative, ">= 0"),
        "shape": _Field("str", "rectangular"),
    },
    "truncation": {
        "max_modes": _Field("int", None, None, lambda value: value >= 1, ">= 1"),
        "n_max": _Field("int", None, None, lambda value: value >= 1, ">= 1"),
    },
    "run": {
        "repetition_rate": _Field("quantity", 500 * u.kHz, u.kHz, _positive, "> 0"),
        "delay": _Field("quantity", 1000 * u.ns, u.ns, _positive, "> 0"),
        "on_time": _Field("quantity", 200 * u.ns, u.ns, _positive, "> 0"),
        "gate_offset": _Field("quantity", None, u.ns, _non_negative, ">= 0"),
        "herald_latency": _Field("quantity", 100 * u.ns, u.ns, _non_negative, ">= 0"),
        "extinction_db": _Field("float", 20.0, None, _non_negative, ">= 0"),
        "dark_probability": _Field("float", 0.0, None, _dark, "in [0, 1)"),
        "detector_efficiency": _Field("float", 1.0, None, _probability, "in [0, 1]"),
    },
    "derived": {
        "B": _Field("float", None, None, _non_negative, ">= 0"),
        "q_t": _Field("floats", None),
        "q_r": _Field("floats", ()),
    },
}

_BOOLEANS = {"1": True, "yes": True, "true": True, "on": True,
             "0": False, "no": False, "false": False, "off": False}


def _parse_field(key_path, field, raw):
    try:
        if field.kind == "str":
            value = str(raw).strip()
        elif field.kind == "bool":
            value = raw if isinstance(raw, bool) else _BOOLEANS[str(raw).strip().lower()]
        elif field.kind == "int":
            value = int(raw)
        elif field.kind == "float":
            value = float(raw)
        elif field.kind == "floats":
            text = raw if isinstance(raw, str) else ", ".join(repr(float(v)) for v in raw)
            value = tuple(float(item) for item in text.split(",") if item.strip())
        else:
            value = u.Quantity(raw)
    except (KeyError, TypeError, ValueError) as err:
        raise ScenarioConfigError(key_path, f"cannot parse {raw!r} as {field.kind}") from err
    if field.kind == "quantity":
        try:
            value = value.to(field.unit)
        except u.UnitConversionError as err:
            raise ScenarioConfigError(key_path, UNIT_ERROR.format(field.unit, str(raw))) from err
        if not np.isfinite(value.value):
            raise ScenarioConfigError(key_path, RANGE_ERROR.format(str(raw), "must be finite"))
        if field.check is not None and not field.check(value.value):
            raise ScenarioConfigError(key_path, RANGE_ERROR.format(str(raw), field.description))
    elif field.check is not None and not field.check(value):
        raise ScenarioConfigError(key_path, RANGE_ERROR.format(raw, field.description))
    return value


def _validate(values):
    """
    Check a nested ``{section: {key: value}}`` mapping against `SCHEMA` and
    fill in defaults. Values may be strings or already-typed objects.
    """
    parsed = {}
    for section, entries in values.items():
        if section not in SCHEMA:
            raise ScenarioConfigError(section, UNKNOWN_SECTION_ERROR.format(", ".join(SCHEMA)))
        for key in entries:
            if key not in SCHEMA[section]:
                raise ScenarioConfigError(f"{section}.{key}", UNKNOWN_KEY_ERROR.format(
                    ", ".join(SCHEMA[section])))
    for section, fields in SCHEMA.items():
        entries = values.get(section, {})
        if section == "derived" and not entries:
            continue
        parsed[section] = {}
        for key, field in fields.items():
            key_path = f"{section}.{key}"
            if key in entries and entries[key] is not None:
                parsed[section][key] = _parse_field(key_path, field, entries[key])
            elif field.default is REQUIRED:
                raise ScenarioConfigError(key_path, MISSING_KEY_ERROR)
            else:
                parsed[section][key] = field.default
    derived = parsed.get("derived")
    if derived is not None and derived["q_t"] is None:
        raise ScenarioConfigError("derived.q_t", MISSING_KEY_ERROR)
    return parsed


def _format_value(value):
    if isinstance(value, u.Quantity):
        return f"{float(value.value)!r} {value.unit.to_string()}"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(item) for item in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


class Scenario:
    """
    Parameters of a source and its heralding set-up.

    Parameters
    ----------
    values: `dict`
        Nested ``{section: {key: value}}`` mapping following `SCHEMA`. Values may
        be strings, as read from a file, or typed objects such as
        `astropy.units.Quantity`.
    source: `str`, optional
        Where the values came from, for log messages.

    Notes
    -----
    The spectral decomposition is computed on first use and cached.
    """

    def __init__(self, values, source=None):
        self.values = _validate(values)
        self.source = source

    @classmethod
    def from_string(cls, text, source="<string>"):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as err:
            raise ScenarioConfigError("<file>", f"{source}: {err}") from err
        return cls({section: dict(parser[section]) for section in parser.sections()},
                   source=source)

    @classmethod
    def from_file(cls, path):
        """
        Read a scenario file.

        Raises
        ------
        `heraldsim.exceptions.ScenarioConfigError`
            If the file is missing or does not follow the schema.
        """
        try:
            with open(path, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as err:
            raise ScenarioConfigError("<file>", f"cannot read {path}: {err}") from err
        scenario = cls.from_string(text, source=str(path))
        log.debug(f"Read scenario {scenario.name!r} from {path}")
        return scenario

    @classmethod
    def reference(cls):
        """The bundled stand-in reference scenario."""
        return cls.from_file(REFERENCE_SCENARIO_PATH)

    def to_string(self, bank=None):
        """
        Render the scenario as a file, optionally with a ``[derived]`` bank section.
        """
        values = dict(self.values)
        if bank is not None:
            values["derived"] = {"B": bank.B if bank.B is not None else 0.0,
                                 "q_t": tuple(float(q) for q in bank.q_t),
                                 "q_r": tuple(float(q) for q in bank.q_r)}
        lines = []
        for section, entries in values.items():
            lines.append(f"[{section}]")
            for key, value in entries.items():
                if value is not None:
                    lines.append(f"{key} = {_format_value(value)}")
            lines.append("")
        return "\n".join(lines)

    @property
    def name(self):
        return self.values["scenario"]["name"]

    @property
    def stand_in(self):
        return self.values["scenario"]["stand_in"]

    @cached_property
    def digest(self):
        """SHA-256 of the canonical, unit-normalized scenario content."""
        lines = []
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                value = self.values[section][key]
                if isinstance(value, u.Quantity):
                    value = value.si
                lines.append(f"{section}.{key}={_format_value(value)}")
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()

    @property
    def max_modes(self):
        value = self.values["truncation"]["max_modes"]
        return conf.max_modes if value is None else value

    @property
    def n_max(self):
        value = self.values["truncation"]["n_max"]
        return conf.n_max if value is None else value

    @property
    def run(self):
        """The ``[run]`` section with quantities converted to SI floats."""
        run = {}
        for key, value in self.values["run"].items():
            run[key] = value.si.value if isinstance(value, u.Quantity) else value
        return run

    @cached_property
    def pump(self):
        pump = self.values["pump"]
        try:
            return PumpSpec(pump["center_wavelength"], pump["spectral_width"], pump["shape"])
        except ValueError as err:
            raise ScenarioConfigError("pump.shape", str(err)) from err

    @cached_property
    def phase_matching(self):
        entries = self.values["phase_matching"]
        return PhaseMatchSpec(entries["inverse_width"], entries["slope"])

    @cached_property
    def filter_spec(self):
        entries = self.values["filter"]
        try:
            return FilterSpec(entries["center"], entries["width"], entries["shape"])
        except ValueError as err:
            raise ScenarioConfigError("filter.shape", str(err)) from err

    @cached_property
    def grid(self):
        entries = self.values["grid"]
        return default_grid(self.pump, entries["bins"], entries["span_factor"])

    @cached_property
    def jsa(self):
        return build_jsa(self.pump, self.phase_matching, self.grid)

    @cached_property
    def spectrum(self):
        """Schmidt spectrum of the unfiltered source."""
        return schmidt_decompose(self.jsa, self.max_modes)

    @cached_property
    def filtered(self):
        """Transmitted and reflected Schmidt families behind the heralding filter."""
        transmitted, reflected = partition_by_filter(self.jsa, self.filter_spec)
        return filtered_schmidt(transmitted, reflected, self.max_modes)

    @cached_property
    def unfiltered(self):
        return FilteredSchmidt.unfiltered(self.spectrum)

    @property
    def derived_bank(self):
        """The `~heraldsim.pdcstate.SqueezerBank` stored in ``[derived]``, if any."""
        derived = self.values.get("derived")
        if derived is None:
            return None
        try:
            return SqueezerBank(derived["q_t"], derived["q_r"], derived["B"])
        except ValueError as err:
            raise ScenarioConfigError("derived.q_t", str(err)) from err

    def __str__(self):
        stand_in = " (stand-in)" if self.stand_in else ""
        return f"Scenario {self.name!r}{stand_in}, digest {self.digest[:12]}"

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


@dataclass(frozen=True)
class LossPreset:
    """
    Path transmissions and sweep range of a named loss budget.

    Parameters
    ----------
    name: `str`
    herald_transmission: `float`
        Transmission in front of each herald detector, T and R.
    heralded_transmission: `float`
        Transmission of the heralded arm up to D1 and D2.
    nbar_min, nbar_max: `float`
        Default sweep range of the mean pair number.
    """
    name: str
    herald_transmission: float
    heralded_transmission: float
    nbar_min: float
    nbar_max: float

    def detectors(self, scenario=None):
        """
        The `~heraldsim.heralding.DetectorSet` of this preset.

        Detector efficiency, dark probability and extinction come from the
        scenario's ``[run]`` section when a scenario is given.
        """
        run = scenario.run if scenario is not None else {
            "detector_efficiency": 1.0, "dark_probability": 0.0, "extinction_db": 20.0}
        detector = DetectorModel(run["detector_efficiency"], run["dark_probability"])
        dark = run["dark_probability"]
        # D1 and D2 together click unless both stay dark.
        arm = DetectorModel(detector.efficiency * self.heralded_transmission,
                            1 - (1 - dark) ** 2)
        return DetectorSet(transmitted=detector.scaled(self.herald_transmission),
                           reflected=detector.scaled(self.herald_transmission),
                           heralded=arm, extinction_db=run["extinction_db"])


PRESETS = {
    "lossless": LossPreset("lossless", 1.0, 1.0, 1e-2, 2.0),
    "experimental": LossPreset("experimental", 0.3, 0.3, 1e-2, 0.4),
}
