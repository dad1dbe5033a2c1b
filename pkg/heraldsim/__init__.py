"""
heraldsim
=========

Simulation of heralded single-photon sources built on filtered parametric
down-conversion: joint spectra and their Schmidt modes, heralding metrics for
standard and extended heralding, pulse-level event streams and the
estimators an experiment computes from them.
"""
import sys

from .config import conf
from .logger import log
from .version import version as __version__

# Enforce Python version check during package import.
__minimum_python_version__ = "3.8"


class UnsupportedPythonError(Exception):
    pass


if sys.version_info < tuple(int(val) for val in __minimum_python_version__.split('.')):
    raise UnsupportedPythonError(
        f"heraldsim does not support Python < {__minimum_python_version__}")

from .eventsim import EventStream, RunConfig  # NOQA
from .heralding import DetectorModel, DetectorSet, HeraldMetrics  # NOQA
from .pdcstate import SqueezerBank  # NOQA
from .scenario import Scenario  # NOQA
from .spectra import FilteredSchmidt, FrequencyGrid, JsaMatrix, SchmidtSpectrum  # NOQA

__all__ = ['conf', 'log', 'Scenario', 'FrequencyGrid', 'JsaMatrix', 'SchmidtSpectrum',
           'FilteredSchmidt', 'SqueezerBank', 'DetectorModel', 'DetectorSet',
           'HeraldMetrics', 'RunConfig', 'EventStream']
