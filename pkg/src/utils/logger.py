"""
Structured logging utility for the DBPL simulator
Provides consistent, leveled logging with timestamps
"""

import logging
import sys
from pathlib import Path
from typing import Optional

from config import LOG_FILE, LOG_LEVEL


class StructuredLogger:
    """
    Structured logger with console output and an optional detailed log file
    """

    def __init__(
        self,
        name: str,
        log_file: Optional[str] = None,
        level: int = logging.INFO
    ):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(min(level, logging.DEBUG) if log_file else level)
        self.logger.handlers.clear()
        self.logger.propagate = False

        # Console handler (stderr keeps stdout free for run output)
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter('%(levelname)s | %(name)s | %(message)s'))
        self.logger.addHandler(console_handler)

        if log_file:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)

            file_handler = logging.FileHandler(log_file)
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(
                '%(asctime)s | %(levelname)s | %(name)s | %(funcName)s:%(lineno)d | %(message)s'
            ))
            self.logger.addHandler(file_handler)

    def info(self, message: str) -> None:
        self.logger.info(message)

    def warning(self, message: str) -> None:
        self.logger.warning(message)

    def error(self, message: str, exc_info: bool = False) -> None:
        self.logger.error(message, exc_info=exc_info)

    def debug(self, message: str) -> None:
        self.logger.debug(message)

    def critical(self, message: str, exc_info: bool = True) -> None:
        self.logger.critical(message, exc_info=exc_info)

    def is_debug(self) -> bool:
        """True when debug messages reach at least one handler"""
        return self.logger.isEnabledFor(logging.DEBUG)

    def bind(self, **fields: object) -> "BoundLogger":
        """View of this logger that tags every message with run fields (seed, strategy, ...)"""
        return BoundLogger(self, fields)


class BoundLogger:
    """
    StructuredLogger view; messages become "[key=value ...] message"
    """

    def __init__(self, base: StructuredLogger, fields: dict):
        self.base = base
        self.tag = " ".join(f"{key}={value}" for key, value in fields.items())

    def _tagged(self, message: str) -> str:
        return f"[{self.tag}] {message}" if self.tag else message

    def info(self, message: str) -> None:
        self.base.info(self._tagged(message))

    def warning(self, message: str) -> None:
        self.base.warning(self._tagged(message))

    def error(self, message: str, exc_info: bool = False) -> None:
        self.base.error(self._tagged(message), exc_info=exc_info)

    def debug(self, message: str) -> None:
        self.base.debug(self._tagged(message))

    def is_debug(self) -> bool:
        return self.base.is_debug()


# Singleton logger instances
_loggers: dict[str, StructuredLogger] = {}


def get_logger(name: str, log_file: Optional[str] = None) -> StructuredLogger:
    """
    Get or create a structured logger instance

    Args:
        name: Logger name (typically module name)
        log_file: Optional log file path, defaults to DBPL_LOG_FILE

    Returns:
        StructuredLogger instance
    """
    if name not in _loggers:
        level = getattr(logging, LOG_LEVEL, logging.INFO)
        _loggers[name] = StructuredLogger(name, log_file or LOG_FILE or None, level)
    return _loggers[name]
