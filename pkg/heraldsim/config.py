"""
Package-wide configuration.

Values can be changed for a session through ``heraldsim.conf`` or permanently
in ``~/.astropy/config/heraldsim.cfg``.
"""
import os

from astropy import config as _config

__all__ = ["Conf", "conf", "OUTPUT_DIR_ENV", "default_output_dir"]

OUTPUT_DIR_ENV = "HERALDSIM_OUTPUT_DIR"


class Conf(_config.ConfigNamespace):
    """
    Configuration parameters for heraldsim.
    """
    output_dir = _config.ConfigItem(
        "heraldsim_output",
        "Directory the command-line tool writes into when --out is not given. "
        f"Overridden by the {OUTPUT_DIR_ENV} environment variable.",
        cfgtype="string")
    max_modes = _config.ConfigItem(
        20, "Number of Schmidt modes kept per mode family.", cfgtype="integer")
    n_max = _config.ConfigItem(
        6, "Largest total photon number kept in occupation-pattern sums.", cfgtype="integer")
    sweep_points = _config.ConfigItem(
        25, "Default number of mean-pair-number points in a sweep.", cfgtype="integer")
    workers = _config.ConfigItem(
        4, "Threads used for sweeps and event-stream generation.", cfgtype="integer")
    block_size = _config.ConfigItem(
        65536, "Pulses per random-number substream in event-stream generation.",
        cfgtype="integer")


conf = Conf()


def default_output_dir():
    """
    Output directory used when none is given explicitly.

    Returns
    -------
    `str`
        ``$HERALDSIM_OUTPUT_DIR`` if set and non-empty, else ``conf.output_dir``.
    """
    return os.environ.get(OUTPUT_DIR_ENV) or conf.output_dir
