"""
The heraldsim logger, built on top of astropy's.
"""
import logging

from astropy.logger import AstropyLogger

__all__ = ["HeraldsimLogger", "log"]


class HeraldsimLogger(AstropyLogger):
    """
    Logger for heraldsim.

    Behaves exactly like `astropy.logger.AstropyLogger`; the subclass only
    exists so heraldsim log records can be told apart from astropy's.
    """


def _init_log():
    """
    Create the ``heraldsim`` logger with astropy's default handlers and level.
    """
    orig_logger_cls = logging.getLoggerClass()
    logging.setLoggerClass(HeraldsimLogger)
    try:
        log = logging.getLogger("heraldsim")
        log._set_defaults()
    finally:
        logging.setLoggerClass(orig_logger_cls)
    return log


log = _init_log()
