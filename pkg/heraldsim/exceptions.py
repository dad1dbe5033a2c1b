"""
Errors and warnings raised by heraldsim.

Every error is a `ValueError` so callers that already guard numerical input
with ``except ValueError`` keep working.
"""
from astropy.utils.exceptions import AstropyUserWarning

__all__ = ["HeraldsimError", "DegenerateJSAError", "UndefinedMetricError",
           "InconsistentEfficiencyError", "ModeCountError", "ScenarioConfigError",
           "StreamParseError", "HeraldsimUserWarning", "TruncationWarning",
           "StandInScenarioWarning"]


class HeraldsimError(ValueError):
    """
    Base class for all heraldsim errors.
    """


class DegenerateJSAError(HeraldsimError):
    """
    The joint spectral amplitude vanishes on the whole frequency grid.
    """


class UndefinedMetricError(HeraldsimError):
    """
    A metric has a zero denominator for the requested configuration.
    """


class InconsistentEfficiencyError(HeraldsimError):
    """
    A click probability exceeds the efficiency it is meant to be scaled by.
    """


class ModeCountError(HeraldsimError):
    """
    Too many modes for exhaustive occupation-pattern enumeration.
    """


class ScenarioConfigError(HeraldsimError):
    """
    A scenario file is malformed.

    Parameters
    ----------
    key_path: `str`
        Dotted ``section.key`` location of the offending entry.
    message: `str`
        What is wrong with it.
    """

    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class StreamParseError(HeraldsimError):
    """
    An event-stream file could not be parsed.

    Parameters
    ----------
    lineno: `int`
        1-based line number of the offending line.
    message: `str`
        What is wrong with it.
    path: `str`, optional
        File being read.
    """

    def __init__(self, lineno, message, path=None):
        self.lineno = lineno
        self.path = path
        location = f"{path}:{lineno}" if path is not None else f"line {lineno}"
        super().__init__(f"{location}: {message}")


class HeraldsimUserWarning(AstropyUserWarning):
    """
    Base class for warnings raised by heraldsim.
    """


class TruncationWarning(HeraldsimUserWarning):
    """
    A mode or photon-number truncation discarded more weight than tolerated.
    """


class StandInScenarioWarning(HeraldsimUserWarning):
    """
    Results were produced from a stand-in (not measured) source scenario.
    """
