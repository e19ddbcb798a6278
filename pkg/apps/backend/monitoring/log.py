"""
Structured Logging Module

This module provides keyword-style loggers that emit JSON records through
python-json-logger, e.g. ``log.info("Contracted PEPS", modes=36)``.
"""

import logging
import sys
from typing import Any, Dict

from pythonjsonlogger import jsonlogger

ROOT_LOGGER = "apps"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"

# LogRecord attributes that cannot be passed through ``extra``
_RESERVED = frozenset(
    logging.LogRecord("", 0, "", 0, "", (), None).__dict__.keys()
) | {"message", "asctime"}


def _as_extra(fields: Dict[str, Any]) -> Dict[str, Any]:
    return {
        (f"{key}_" if key in _RESERVED else key): value
        for key, value in fields.items()
    }


class KeywordLogger:
    """Logger adapter accepting structured fields as keyword arguments."""

    def __init__(self, name: str) -> None:
        self._logger = logging.getLogger(name)

    @property
    def name(self) -> str:
        return self._logger.name

    def debug(self, message: str, **fields: Any) -> None:
        self._logger.debug(message, extra=_as_extra(fields))

    def info(self, message: str, **fields: Any) -> None:
        self._logger.info(message, extra=_as_extra(fields))

    def warning(self, message: str, **fields: Any) -> None:
        self._logger.warning(message, extra=_as_extra(fields))

    def error(self, message: str, **fields: Any) -> None:
        self._logger.error(message, extra=_as_extra(fields))

    def isEnabledFor(self, level: int) -> bool:
        return self._logger.isEnabledFor(level)


def get_logger(name: str) -> KeywordLogger:
    """Return the keyword logger for a module."""
    return KeywordLogger(name)


def configure_logging(level: str = "INFO", json_output: bool = True) -> logging.Logger:
    """
    Install a single stream handler on the package logger tree.

    Args:
        level: Logging level name
        json_output: Emit JSON records when True, plain text otherwise

    Returns:
        logging.Logger: The configured package logger
    """
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    if json_output:
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))

    logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False
    return logger
