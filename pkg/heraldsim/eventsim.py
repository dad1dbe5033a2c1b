"""
Pulse-by-pulse Monte Carlo of a heralded source with feed-forward gating,
producing time-tag streams like those of a time-to-digital converter.

Each pulse draws a thermal photon number for every Schmidt mode. The
transmitted family's signal photons go to herald detector T, the reflected
family's to R. The heralding logic emits a HERALD record and, with
feed-forward enabled, opens the switch in the heralded arm for that pulse.
Idler photons of both families reach the switch, which passes them fully when
open and with the extinction leakage when closed. Survivors are split 50/50
onto D1 and D2.

Random numbers come from `numpy.random.Philox`. Pulse block ``b`` (pulses
``b * block_size`` up to ``(b + 1) * block_size``) uses its own stream seeded
with ``SeedSequence(seed, spawn_key=(b,))``, so a stream is identical however
many threads generate it.
"""
import math
import textwrap
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple

import numpy as np

from heraldsim.config import conf
from heraldsim.exceptions import StreamParseError
from heraldsim.heralding import (PERFECT_DETECTOR, DetectorModel,
                                 calibrate_to_herald_probability, click_coefficient,
                                 extinction_transmission, herald_probability, p_herald)
from heraldsim.logger import log
from heraldsim.pdcstate import (OccupationPattern, SqueezerBank, calibrate_pump_factor,
                                squeezer_bank)
from heraldsim.scenario import PRESETS

__all__ = ["RunConfig", "EventRecord", "EventStream", "sample_pattern", "sample_patterns",
           "simulate_run", "write_stream", "read_stream", "analytic_herald_probability",
           "CHANNELS", "STREAM_FORMAT", "RNG_ALGORITHM", "COLUMN_LINE"]

CHANNELS = ("T", "R", "D1", "D2", "HERALD")
CHANNEL_CODES = {name: code for code, name in enumerate(CHANNELS)}
STREAM_FORMAT = "heraldsim-stream-1"
RNG_ALGORITHM = "Philox4x64-10"
COLUMN_LINE = "channel,pulse_index,time_ps"
RUN_SCHEMES = ("standard", "extended")
PS_PER_S = 10 ** 12

UNSORTED_ERROR = "records must be sorted by time, then by channel order " + ", ".join(CHANNELS)
SATURATED_MODE_ERROR = "Cannot sample a mode with tanh(q)**2 == 1; q is too large."


def _to_ps(seconds):
    return int(round(seconds * PS_PER_S))


@dataclass(frozen=True)
class RunConfig:
    """
    Parameters of one simulated acquisition.

    Parameters
    ----------
    bank: `heraldsim.pdcstate.SqueezerBank`
        Source state.
    pulses: `int`
        Number of pump pulses.
    repetition_rate: `float`
        Pulse rate in Hz.
    herald_transmission: `float`
        Path transmission in front of T and R, folded into their efficiency.
    heralded_transmission: `float`
        Heralded-arm transmission, applied before the switch.
    detector_t, detector_r, detector_d1, detector_d2: `heraldsim.heralding.DetectorModel`
        Bare detector models of the four channels.
    delay: `float`
        Delay line in front of the switch, in seconds.
    on_time: `float`
        How long the switch stays open once triggered, in seconds.
    gate_offset: `float`, optional
        When the switch opens after the pulse, in seconds. Defaults to
        ``delay - on_time / 2``, centring the window on the idler arrival.
    herald_latency: `float`
        Offset of HERALD records from the pulse, in seconds.
    extinction_db: `float`
        Suppression of the closed switch. ``inf`` blocks completely.
    scheme: `str`
        ``"standard"`` or ``"extended"`` heralding.
    feed_forward: `bool`
        If False the switch is held transparent and heralding only labels pulses.
    seed: `int`
    block_size: `int`, optional
        Pulses per random-number stream. Defaults to ``heraldsim.conf.block_size``.
    workers: `int`
        Threads used to generate blocks.
    digest: `str`
        Digest of the scenario the bank came from.
    """
    bank: SqueezerBank
    pulses: int
    repetition_rate: float = 500e3
    herald_transmission: float = 1.0
    heralded_transmission: float = 1.0
    detector_t: DetectorModel = PERFECT_DETECTOR
    detector_r: DetectorModel = PERFECT_DETECTOR
    detector_d1: DetectorModel = PERFECT_DETECTOR
    detector_d2: DetectorModel = PERFECT_DETECTOR
    delay: float = 1e-6
    on_time: float = 200e-9
    gate_offset: float = None
    herald_latency: float = 100e-9
    extinction_db: float = 20.0
    scheme: str = "standard"
    feed_forward: bool = True
    seed: int = 0
    block_size: int = None
    workers: int = 1
    digest: str = field(default="", compare=False)

    def __post_init__(self):
        if self.gate_offset is None:
            object.__setattr__(self, "gate_offset", self.delay - self.on_time / 2)
        if self.block_size is None:
            object.__setattr__(self, "block_size", int(conf.block_size))
        if int(self.pulses) != self.pulses or self.pulses < 0:
            raise ValueError(f"pulses must be a non-negative integer; got {self.pulses}.")
        for name in ("repetition_rate", "delay", "on_time"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite; got {value}.")
        for name in ("gate_offset", "herald_latency"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative; got {getattr(self, name)}.")
        for name in ("herald_transmission", "heralded_transmission"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]; got {getattr(self, name)}.")
        if not self.extinction_db >= 0:
            raise ValueError(f"extinction_db must be non-negative; got {self.extinction_db}.")
        if self.scheme not in RUN_SCHEMES:
            raise ValueError(f"scheme must be one of {RUN_SCHEMES}; got {self.scheme!r}.")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer; got {self.seed}.")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be at least 1.")

    @classmethod
    def from_scenario(cls, scenario, *, preset="experimental", n_bar=None,
                      herald_probability=None, scheme="standard", **overrides):
        """
        Build a run from a scenario and a loss preset.

        The bank is calibrated either to a pre-filter mean pair number
        ``n_bar`` or to an accepted-herald probability. Without either, the
        scenario's ``[derived]`` bank is used.
        """
        loss = PRESETS[preset]
        run = scenario.run
        detector = DetectorModel(run["detector_efficiency"], run["dark_probability"])
        if herald_probability is not None:
            B = calibrate_to_herald_probability(scenario.filtered, herald_probability, scheme,
                                                loss.detectors(scenario), scenario.n_max)
            bank = squeezer_bank(scenario.filtered, B)
        elif n_bar is not None:
            bank = squeezer_bank(scenario.filtered,
                                 calibrate_pump_factor(scenario.unfiltered, n_bar))
        elif scenario.derived_bank is not None:
            bank = scenario.derived_bank
        else:
            raise ValueError("Give n_bar or herald_probability, or a scenario with a "
                             "[derived] bank.")
        settings = dict(
            bank=bank, pulses=0, repetition_rate=run["repetition_rate"],
            herald_transmission=loss.herald_transmission,
            heralded_transmission=loss.heralded_transmission,
            detector_t=detector, detector_r=detector, detector_d1=detector,
            detector_d2=detector, delay=run["delay"], on_time=run["on_time"],
            gate_offset=run["gate_offset"], herald_latency=run["herald_latency"],
            extinction_db=run["extinction_db"], scheme=scheme, digest=scenario.digest)
        settings.update(overrides)
        return cls(**settings)

    @classmethod
    def from_header(cls, header):
        """
        Rebuild a configuration from an event-stream header.
        """
        def detector(channel):
            return DetectorModel(float(header[f"eta_{channel}"]),
                                 float(header[f"dark_{channel}"]))

        def seconds(key):
            return int(header[key]) / PS_PER_S

        try:
            return cls(
                bank=SqueezerBank.from_dict(header), pulses=int(header["pulses"]),
                repetition_rate=float(header["repetition_rate_hz"]),
                herald_transmission=float(header["herald_transmission"]),
                heralded_transmission=float(header["heralded_transmission"]),
                detector_t=detector("T"), detector_r=detector("R"),
                detector_d1=detector("D1"), detector_d2=detector("D2"),
                delay=seconds("delay_ps"), on_time=seconds("on_time_ps"),
                gate_offset=seconds("gate_offset_ps"),
                herald_latency=seconds("herald_latency_ps"),
                extinction_db=float(header["extinction_db"]), scheme=header["scheme"],
                feed_forward=header["feed_forward"] == "true", seed=int(header["seed"]),
                block_size=int(header["block_size"]), digest=header.get("digest", ""))
        except KeyError as err:
            raise ValueError(f"The stream header lacks the key {err.args[0]!r}.") from err

    @property
    def period_ps(self):
        return _to_ps(1 / self.repetition_rate)

    @property
    def gate_opens(self):
        """Whether a herald opens the switch in time for its idler photons."""
        delay = _to_ps(self.delay)
        start = _to_ps(self.gate_offset)
        return self.feed_forward and start <= delay <= start + _to_ps(self.on_time)

    @property
    def leakage(self):
        """Transmission of the closed switch."""
        return extinction_transmission(self.extinction_db)

    @property
    def effective_t(self):
        return self.detector_t.scaled(self.herald_transmission)

    @property
    def effective_r(self):
        return self.detector_r.scaled(self.herald_transmission)

    def channel_offsets_ps(self):
        """Time of each channel's records relative to its pulse, in `CHANNELS` order."""
        delay = _to_ps(self.delay)
        return np.array([0, 0, delay, delay, _to_ps(self.herald_latency)], dtype=np.int64)

    def header(self):
        """The event-stream header, as strings."""
        header = {
            "format": STREAM_FORMAT,
            "digest": self.digest,
            "seed": str(self.seed),
            "rng": RNG_ALGORITHM,
            "block_size": str(self.block_size),
            "repetition_rate_hz": repr(float(self.repetition_rate)),
            "pulses": str(self.pulses),
            "scheme": self.scheme,
            "feed_forward": "true" if self.feed_forward else "false",
            "extinction_db": repr(float(self.extinction_db)),
            "delay_ps": str(_to_ps(self.delay)),
            "on_time_ps": str(_to_ps(self.on_time)),
            "gate_offset_ps": str(_to_ps(self.gate_offset)),
            "herald_latency_ps": str(_to_ps(self.herald_latency)),
            "herald_transmission": repr(float(self.herald_transmission)),
            "heralded_transmission": repr(float(self.heralded_transmission)),
        }
        for channel, detector in (("T", self.detector_t), ("R", self.detector_r),
                                  ("D1", self.detector_d1), ("D2", self.detector_d2)):
            header[f"eta_{channel}"] = repr(float(detector.efficiency))
            header[f"dark_{channel}"] = repr(float(detector.dark_probability))
        header.update(self.bank.as_dict())
        return header


class EventRecord(NamedTuple):
    channel: str
    pulse_index: int
    time_ps: int


class EventStream:
    """
    Time-ordered detector records of one acquisition.

    Parameters
    ----------
    header: `dict`
        String key/value pairs describing the run.
    channels: array-like
        Channel codes, indices into `CHANNELS`.
    pulse_indices: array-like
        Pulse each record belongs to.
    times_ps: array-like
        Record timestamps in picoseconds.

    Raises
    ------
    `ValueError`
        If the records are not sorted by time and channel order, or refer to a
        pulse outside the run.
    """

    def __init__(self, header, channels, pulse_indices, times_ps):
        self.header = {str(key): str(value) for key, value in header.items()}
        self.channels = np.array(channels, dtype=np.uint8)
        self.pulse_indices = np.array(pulse_indices, dtype=np.int64)
        self.times_ps = np.array(times_ps, dtype=np.int64)
        if not len(self.channels) == len(self.pulse_indices) == len(self.times_ps):
            raise ValueError("channels, pulse_indices and times_ps must have equal length.")
        for array in (self.channels, self.pulse_indices, self.times_ps):
            array.setflags(write=False)
        if np.any(self.channels >= len(CHANNELS)):
            raise ValueError(f"Channel codes must be below {len(CHANNELS)}.")
        dt = np.diff(self.times_ps)
        if np.any(dt < 0) or np.any((dt == 0) & (np.diff(self.channels.astype(int)) <= 0)):
            raise ValueError(UNSORTED_ERROR)
        if len(self) and (self.pulse_indices.min() < 0
                          or self.pulse_indices.max() >= self.n_pulses):
            raise ValueError(f"Pulse indices must lie in [0, {self.n_pulses}).")

    def __len__(self):
        return len(self.channels)

    @property
    def n_pulses(self):
        """Number of pulses in the run, from the header if present."""
        if "pulses" in self.header:
            return int(self.header["pulses"])
        return int(self.pulse_indices.max()) + 1 if len(self) else 0

    @property
    def channel_names(self):
        return np.array(CHANNELS)[self.channels]

    def count(self, channel):
        return int(np.count_nonzero(self.channels == CHANNEL_CODES[channel]))

    def pulses_with(self, channel):
        """Sorted, unique pulse indices carrying a record on ``channel``."""
        return np.unique(self.pulse_indices[self.channels == CHANNEL_CODES[channel]])

    def records(self):
        for code, pulse, time in zip(self.channels, self.pulse_indices, self.times_ps):
            yield EventRecord(CHANNELS[code], int(pulse), int(time))

    def select(self, mask, header=None):
        """New stream holding the records where ``mask`` is True."""
        header = self.header if header is None else header
        return EventStream(header, self.channels[mask], self.pulse_indices[mask],
                           self.times_ps[mask])

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.header == other.header and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.pulse_indices, other.pulse_indices)
                and np.array_equal(self.times_ps, other.times_ps))

    def __str__(self):
        counts = ", ".join(f"{name}: {self.count(name)}" for name in CHANNELS)
        return textwrap.dedent(f"""\
                EventStream
                -----------
                Pulses:\t\t{self.n_pulses}
                Records:\t{len(self)}
                Per channel:\t{counts}
                Seed:\t\t{self.header.get("seed", "unknown")}""")

    def __repr__(self):
        return f"{object.__repr__(self)}\n{str(self)}"


def sample_patterns(bank, rng, size):
    """
    Draw per-mode photon numbers for ``size`` pulses.

    Returns
    -------
    counts_t, counts_r: `numpy.ndarray`
        Integer arrays of shape ``(size, modes)`` for each family.
    """
    def draw(mu):
        if len(mu) == 0:
            return np.zeros((size, 0), dtype=np.int64)
        if np.any(mu >= 1):
            raise ValueError(SATURATED_MODE_ERROR)
        # numpy's geometric counts trials up to the first success, starting at 1.
        return rng.geometric(1 - mu, size=(size, len(mu))) - 1

    return draw(bank.mu_t), draw(bank.mu_r)


def sample_pattern(bank, rng):
    """
    Draw one occupation pattern from the thermal distribution of each mode.
    """
    counts_t, counts_r = sample_patterns(bank, rng, 1)
    return OccupationPattern(tuple(int(n) for n in counts_t[0]),
                             tuple(int(n) for n in counts_r[0]))


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed,
                                                                       spawn_key=(block,))))


def _simulate_block(config, block):
    """
    Channel codes and pulse indices of the clicks in one pulse block.

    The order of random draws is fixed: photon numbers, the four detector
    uniforms, switch survival, then the splitter.
    """
    start = block * config.block_size
    size = min(config.block_size, config.pulses - start)
    rng = _block_rng(config.seed, block)
    counts_t, counts_r = sample_patterns(config.bank, rng, size)
    n_t = counts_t.sum(axis=1)
    n_r = counts_r.sum(axis=1)
    uniforms = rng.random((size, 4))

    click_t = uniforms[:, 0] < click_coefficient(n_t, config.effective_t)
    click_r = uniforms[:, 1] < click_coefficient(n_r, config.effective_r)
    herald = click_t & ~click_r if config.scheme == "extended" else click_t

    if config.feed_forward:
        gate = np.where(herald & config.gate_opens, 1.0, config.leakage)
    else:
        gate = np.ones(size)
    surviving = rng.binomial(n_t + n_r, config.heralded_transmission * gate)
    to_d1 = rng.binomial(surviving, 0.5)
    click_d1 = uniforms[:, 2] < click_coefficient(to_d1, config.detector_d1)
    click_d2 = uniforms[:, 3] < click_coefficient(surviving - to_d1, config.detector_d2)

    pulses = np.arange(start, start + size, dtype=np.int64)
    channels, indices = [], []
    for code, clicked in enumerate((click_t, click_r, click_d1, click_d2, herald)):
        indices.append(pulses[clicked])
        channels.append(np.full(np.count_nonzero(clicked), code, dtype=np.uint8))
    return np.concatenate(channels), np.concatenate(indices)


def simulate_run(config):
    """
    Simulate an acquisition.

    Parameters
    ----------
    config: `RunConfig`

    Returns
    -------
    `EventStream`
    """
    n_blocks = math.ceil(config.pulses / config.block_size)
    simulate = partial(_simulate_block, config)
    if config.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            blocks = list(executor.map(simulate, range(n_blocks)))
    else:
        blocks = [simulate(block) for block in range(n_blocks)]
    if blocks:
        channels = np.concatenate([block[0] for block in blocks])
        pulses = np.concatenate([block[1] for block in blocks])
    else:
        channels = np.zeros(0, dtype=np.uint8)
        pulses = np.zeros(0, dtype=np.int64)
    times = pulses * config.period_ps + config.channel_offsets_ps()[channels]
    order = np.lexsort((channels, times))
    stream = EventStream(config.header(), channels[order], pulses[order], times[order])
    log.info(f"Simulated {config.pulses} pulses: {stream.count('HERALD')} heralds, "
             f"{len(stream)} records")
    return stream


def analytic_herald_probability(config):
    """
    Per-pulse probability of a HERALD record predicted by the metric engine.
    """
    if config.scheme == "extended":
        return herald_probability(config.bank, config.effective_t, config.effective_r)
    return p_herald(config.bank, config.effective_t)


def write_stream(stream, path):
    """
    Write an event stream as UTF-8 text.

    The file starts with ``# key: value`` header lines, then the column line
    ``channel,pulse_index,time_ps`` and one line per record.
    """
    lines = ["# heraldsim event stream"]
    lines.extend(f"# {key}: {value}" for key, value in stream.header.items())
    lines.append(COLUMN_LINE)
    lines.extend(f"{CHANNELS[code]},{pulse},{time}" for code, pulse, time in
                 zip(stream.channels.tolist(), stream.pulse_indices.tolist(),
                     stream.times_ps.tolist()))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    log.info(f"Wrote {len(stream)} records to {path}")


def read_stream(path):
    """
    Read a file written by `write_stream`.

    Raises
    ------
    `heraldsim.exceptions.StreamParseError`
        With the line number of the first malformed line.
    """
    header = {}
    channels, pulses, times = [], [], []
    previous = (-1, -1)
    in_records = False
    lineno = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\r\n")
            if not in_records:
                if line.startswith("#"):
                    key, colon, value = line[1:].partition(":")
                    if colon:
                        header[key.strip()] = value.strip()
                    continue
                if line.strip() != COLUMN_LINE:
                    raise StreamParseError(lineno, f"expected the column line {COLUMN_LINE!r}",
                                           path)
                in_records = True
                continue
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != 3:
                raise StreamParseError(lineno, f"expected 3 fields, got {len(fields)}", path)
            name, pulse, time = (item.strip() for item in fields)
            if name not in CHANNEL_CODES:
                raise StreamParseError(lineno, f"unknown channel {name!r}", path)
            try:
                pulse, time = int(pulse), int(time)
            except ValueError:
                raise StreamParseError(lineno, "pulse_index and time_ps must be integers",
                                       path) from None
            if pulse < 0 or time < 0:
                raise StreamParseError(lineno, "pulse_index and time_ps must be non-negative",
                                       path)
            code = CHANNEL_CODES[name]
            if (time, code) <= previous:
                raise StreamParseError(lineno, UNSORTED_ERROR, path)
            previous = (time, code)
            channels.append(code)
            pulses.append(pulse)
            times.append(time)
    if not in_records:
        raise StreamParseError(lineno + 1, f"missing the column line {COLUMN_LINE!r}", path)
    try:
        return EventStream(header, channels, pulses, times)
    except ValueError as err:
        raise StreamParseError(lineno, str(err), path) from err
