"""
The ``heraldsim`` command-line tool.

``heraldsim sweep`` evaluates the heralding schemes over a range of mean pair
numbers, ``heraldsim simulate`` writes a simulated event stream and
``heraldsim analyze`` computes the estimators of a stream.
"""
import argparse
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from astropy.table import Table

from heraldsim.analysis import analyze_stream, apply_extended_heralding, summarize_sweep
from heraldsim.config import conf, default_output_dir
from heraldsim.eventsim import (RUN_SCHEMES, RunConfig, analytic_herald_probability,
                                read_stream, simulate_run, write_stream)
from heraldsim.exceptions import (HeraldsimError, ScenarioConfigError, StandInScenarioWarning,
                                  StreamParseError, UndefinedMetricError)
from heraldsim.heralding import METRIC_COLUMNS, SCHEMES, evaluate_scheme
from heraldsim.logger import log
from heraldsim.pdcstate import calibrate_pump_factor
from heraldsim.scenario import PRESETS, REFERENCE_SCENARIO_PATH, Scenario
from heraldsim.version import version

__all__ = ["SweepSpec", "main", "build_parser", "sweep_table", "cmd_sweep", "cmd_simulate",
           "cmd_analyze", "EXIT_OK", "EXIT_CONFIG", "EXIT_DATA", "EXIT_UNDEFINED"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_UNDEFINED = 4

MAX_NBAR = 4.0
DEFAULT_SIMULATION_NBAR = 1e-2

STAND_IN_WARNING = ("Scenario {!r} is a stand-in, not a measured source; its outputs are "
                    "flagged accordingly.")


@dataclass(frozen=True)
class SweepSpec:
    """
    What a metric sweep evaluates.

    Parameters
    ----------
    preset: `str`
        Key of `heraldsim.scenario.PRESETS`.
    schemes: `tuple` of `str`
        Heralding schemes, from `heraldsim.heralding.SCHEMES`.
    points: `int`, optional
        Number of log-spaced mean pair numbers. Defaults to ``conf.sweep_points``.
    nbar_min, nbar_max: `float`, optional
        Sweep range, inside ``(0, 4]``. Defaults to the preset's range.
    workers: `int`, optional
        Threads evaluating sweep points. Defaults to ``conf.workers``.
    """
    preset: str = "experimental"
    schemes: tuple = SCHEMES
    points: int = None
    nbar_min: float = None
    nbar_max: float = None
    workers: int = None
    svg: bool = False
    dump_jsa: bool = False
    n_bars: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"Unknown preset {self.preset!r}; choose one of {tuple(PRESETS)}.")
        preset = PRESETS[self.preset]
        defaults = {"points": conf.sweep_points, "workers": conf.workers,
                    "nbar_min": preset.nbar_min, "nbar_max": preset.nbar_max}
        for name, default in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        object.__setattr__(self, "schemes", tuple(self.schemes))
        unknown = set(self.schemes) - set(SCHEMES)
        if not self.schemes or unknown:
            raise ValueError(f"Schemes must be drawn from {SCHEMES}; got {self.schemes}.")
        if not 0 < self.nbar_min <= self.nbar_max <= MAX_NBAR:
            raise ValueError(f"The sweep range must satisfy 0 < nbar_min <= nbar_max <= "
                             f"{MAX_NBAR}; got [{self.nbar_min}, {self.nbar_max}].")
        if self.points < 2:
            raise ValueError(f"A sweep needs at least 2 points; got {self.points}.")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1; got {self.workers}.")
        object.__setattr__(self, "n_bars", np.geomspace(self.nbar_min, self.nbar_max,
                                                        self.points))


def _meta_comments(scenario, **extra):
    comments = [f"scenario: {scenario.name}",
                f"digest: {scenario.digest}",
                f"stand_in: {'yes' if scenario.stand_in else 'no'}"]
    comments.extend(f"{key}: {value}" for key, value in extra.items())
    comments.append(f"heraldsim: {version}")
    return comments


def sweep_table(scenario, spec):
    """
    Evaluate every scheme of a sweep.

    The pump factor of each point is calibrated on the unfiltered spectrum, so
    all schemes at a point share one source.

    Returns
    -------
    `astropy.table.Table`
        One row per scheme and point, schemes in ``spec.schemes`` order and
        points in increasing mean pair number.
    """
    detectors = PRESETS[spec.preset].detectors(scenario)
    sources = {scheme: scenario.unfiltered if scheme == "unfiltered" else scenario.filtered
               for scheme in spec.schemes}
    n_max = scenario.n_max

    def evaluate_point(n_bar):
        B = calibrate_pump_factor(scenario.unfiltered, n_bar)
        return [evaluate_scheme(sources[scheme], B, scheme, detectors, n_max, n_bar=n_bar)
                for scheme in spec.schemes]

    log.info(f"Sweeping {len(spec.n_bars)} points of {len(spec.schemes)} schemes "
             f"({spec.preset} preset, {spec.workers} workers)")
    with ThreadPoolExecutor(max_workers=spec.workers) as executor:
        points = list(executor.map(evaluate_point, spec.n_bars))
    metrics = [point[index] for index in range(len(spec.schemes)) for point in points]
    if any(row.truncated for row in metrics):
        log.warning("Some sweep points exceed the truncation tolerance; "
                    "consider raising max_modes or n_max.")
    table = Table(rows=[row.as_row() for row in metrics], names=METRIC_COLUMNS)
    table.meta["comments"] = _meta_comments(scenario, preset=spec.preset)
    return table


def cmd_sweep(scenario, spec, out_dir):
    """
    Run a metric sweep and write its outputs into ``out_dir``.

    Writes ``sweep_<preset>.csv`` and ``sweep_<preset>_summary.txt``, plus
    ``sweep_<preset>_<metric>.svg`` charts if ``spec.svg`` and ``jsa.csv`` if
    ``spec.dump_jsa``.

    Returns
    -------
    `dict`
        Written paths keyed by kind.
    """
    os.makedirs(out_dir, exist_ok=True)
    prefix = os.path.join(out_dir, f"sweep_{spec.preset}")
    table = sweep_table(scenario, spec)
    paths = {"csv": f"{prefix}.csv", "summary": f"{prefix}_summary.txt"}
    table.write(paths["csv"], format="ascii.csv", overwrite=True)
    summary = summarize_sweep(table)
    lines = [f"# {comment}" for comment in table.meta["comments"]]
    lines.extend(f"{key} = {value}" for key, value in summary.items())
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    print("\n".join(lines[len(table.meta["comments"]):]))
    if spec.svg:
        from heraldsim.plotting import write_sweep_charts

        title = f"{scenario.name}, {spec.preset} preset"
        paths["svg"] = write_sweep_charts(table, prefix, title)
    if spec.dump_jsa:
        paths["jsa"] = os.path.join(out_dir, "jsa.csv")
        scenario.jsa.write_csv(paths["jsa"])
    for path in paths.values():
        log.info(f"Wrote {path}")
    return paths


def cmd_simulate(scenario, out_dir, *, preset="experimental", n_bar=None,
                 herald_probability=None, **overrides):
    """
    Simulate a run of the scenario and write ``stream_<seed>.csv`` into ``out_dir``.

    Parameters
    ----------
    scenario: `heraldsim.scenario.Scenario`
    out_dir: `str`
    preset: `str`
    n_bar, herald_probability: `float`, optional
        How to set the pump; see `heraldsim.eventsim.RunConfig.from_scenario`.
        Without either, the scenario's ``[derived]`` bank or a mean pair number
        of 0.01 is used.
    **overrides
        Further `heraldsim.eventsim.RunConfig` fields, such as ``pulses`` or ``seed``.

    Returns
    -------
    `str`
        Path of the stream file.
    """
    if n_bar is None and herald_probability is None and scenario.derived_bank is None:
        n_bar = DEFAULT_SIMULATION_NBAR
    config = RunConfig.from_scenario(scenario, preset=preset, n_bar=n_bar,
                                     herald_probability=herald_probability, **overrides)
    stream = simulate_run(config)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"stream_{config.seed}.csv")
    write_stream(stream, path)
    heralds = stream.count("HERALD")
    expected = analytic_herald_probability(config)
    rate = heralds / config.pulses if config.pulses else 0.0
    print(f"pulses = {config.pulses}\nheralds = {heralds}\n"
          f"herald_probability = {rate:.6g}\nexpected_herald_probability = {expected:.6g}")
    return path


def cmd_analyze(stream_path, out_dir, n_splits=None, extended=False):
    """
    Analyze an event stream and write ``<stream>_report.txt`` and
    ``<stream>_report.csv`` into ``out_dir``.

    Parameters
    ----------
    stream_path: `str`
    out_dir: `str`
    n_splits: `int`, optional
        Also report g2 over this many pulse ranges.
    extended: `bool`
        Apply extended heralding in software before analysing.

    Returns
    -------
    `heraldsim.analysis.AnalysisReport`
    """
    stream = read_stream(stream_path)
    if extended:
        stream = apply_extended_heralding(stream)
    try:
        config = RunConfig.from_header(stream.header)
    except ValueError as err:
        log.info(f"No run settings in {stream_path} ({err}); skipping the output noise factor")
        config = None
    report = analyze_stream(stream, config, n_splits)
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, os.path.splitext(os.path.basename(stream_path))[0])
    comments = [f"stream: {os.path.basename(stream_path)}",
                f"digest: {stream.header.get('digest', '')}",
                f"scheme: {stream.header.get('scheme', 'unknown')}",
                f"heraldsim: {version}"]
    text = report.as_text()
    with open(f"{stem}_report.txt", "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)
    report.as_table(comments).write(f"{stem}_report.csv", format="ascii.csv", overwrite=True)
    print(text, end="")
    log.info(f"Wrote {stem}_report.txt and {stem}_report.csv")
    return report


def build_parser():
    parser = argparse.ArgumentParser(prog="heraldsim", description=__doc__.strip().split("\n")[0])
    parser.add_argument("--version", action="version", version=f"heraldsim {version}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="Scenario file (default: the bundled reference scenario).")
    common.add_argument("--out", default=None,
                        help="Output directory (default: $HERALDSIM_OUTPUT_DIR or the "
                        "output_dir configuration item).")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log debug messages.")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Log only warnings.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("sweep", parents=[common], help="Evaluate metrics over a pump sweep.")
    s.add_argument("--preset", choices=tuple(PRESETS), default="experimental")
    s.add_argument("--scheme", action="append", choices=SCHEMES, dest="schemes",
                   help="Scheme to evaluate; repeat for several (default: all).")
    s.add_argument("--points", type=int, default=None)
    s.add_argument("--nbar-min", type=float, default=None)
    s.add_argument("--nbar-max", type=float, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--svg", action="store_true", help="Also write SVG charts.")
    s.add_argument("--dump-jsa", action="store_true", help="Also write the JSA as jsa.csv.")

    m = sub.add_parser("simulate", parents=[common], help="Simulate an event stream.")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--pulses", type=int, default=1_000_000)
    m.add_argument("--scheme", choices=RUN_SCHEMES, default="standard")
    pump = m.add_mutually_exclusive_group()
    pump.add_argument("--nbar", type=float, default=None,
                      help="Mean pair number before the filter.")
    pump.add_argument("--herald-probability", type=float, default=None,
                      help="Accepted-herald probability per pulse to calibrate to.")
    m.add_argument("--no-feed-forward", action="store_true",
                   help="Hold the switch transparent.")
    m.add_argument("--extinction-db", type=float, default=None)
    m.add_argument("--preset", choices=tuple(PRESETS), default="experimental")
    m.add_argument("--workers", type=int, default=None)

    a = sub.add_parser("analyze", parents=[common], help="Analyze an event stream.")
    a.add_argument("stream", metavar="STREAM")
    a.add_argument("--splits", type=int, default=None,
                   help="Also estimate g2 over this many pulse ranges.")
    a.add_argument("--extended", action="store_true",
                   help="Apply extended heralding in software first.")
    return parser


def _load_scenario(path):
    scenario = Scenario.from_file(path or REFERENCE_SCENARIO_PATH)
    if scenario.stand_in:
        warnings.warn(STAND_IN_WARNING.format(scenario.name), StandInScenarioWarning)
    return scenario


def _run(args):
    out_dir = args.out or default_output_dir()
    if args.cmd == "analyze":
        cmd_analyze(args.stream, out_dir, args.splits, args.extended)
        return
    scenario = _load_scenario(args.config)
    if args.cmd == "sweep":
        spec = SweepSpec(args.preset, tuple(args.schemes or SCHEMES), args.points,
                         args.nbar_min, args.nbar_max, args.workers, args.svg, args.dump_jsa)
        cmd_sweep(scenario, spec, out_dir)
    else:
        overrides = {"pulses": args.pulses, "seed": args.seed,
                     "feed_forward": not args.no_feed_forward,
                     "workers": args.workers or conf.workers}
        if args.extinction_db is not None:
            overrides["extinction_db"] = args.extinction_db
        cmd_simulate(scenario, out_dir, preset=args.preset, n_bar=args.nbar,
                     herald_probability=args.herald_probability, scheme=args.scheme,
                     **overrides)


def main(argv=None):
    """
    Entry point of the ``heraldsim`` command.

    Returns
    -------
    `int`
        0 on success, 2 for configuration or usage errors, 3 for data errors
        and 4 for undefined metrics.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code
    level = log.level
    if args.verbose:
        log.setLevel("DEBUG")
    elif args.quiet:
        log.setLevel("WARNING")
    try:
        _run(args)
    except UndefinedMetricError as err:
        log.error(str(err))
        return EXIT_UNDEFINED
    except (StreamParseError, OSError) as err:
        log.error(str(err))
        return EXIT_DATA
    except (ScenarioConfigError, HeraldsimError, ValueError) as err:
        log.error(str(err))
        return EXIT_CONFIG
    finally:
        log.setLevel(level)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
