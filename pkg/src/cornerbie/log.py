# log.py
import json
import logging
import sys
import time
import traceback
from contextlib import contextmanager
from datetime import datetime
from functools import partialmethod
from logging.handlers import RotatingFileHandler
from pathlib import Path
from types import TracebackType
from typing import Any, Iterator, Optional, Type

import numpy as np

DEFAULT_DATEFMT = '%Y-%m-%d %H:%M:%S'
DEFAULT_FMT = '%(asctime)s %(levelname)s %(message)s'
LOGGER_NAME = 'cornerbie'


def _json_default(value: Any) -> Any:
    """Make numpy scalars and arrays JSON serializable."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def _to_text(value: Any) -> str:
    if isinstance(value, (dict, list, tuple, np.ndarray)):
        return json.dumps(value, default=_json_default)
    if isinstance(value, (float, np.floating)):
        return f'{float(value):.17g}'
    return str(value)


class StructuredFormatter(logging.Formatter):
    """Formatter that prints extra arguments and keyword context below the message."""

    def formatTime(self, record: logging.LogRecord, datefmt: Optional[str] = None) -> str:
        ct = datetime.fromtimestamp(record.created)
        return ct.strftime(datefmt or DEFAULT_DATEFMT)

    def format(self, record: logging.LogRecord) -> str:
        lines = [super().format(record)]

        for arg in getattr(record, '_extra_args', None) or []:
            lines.append(self._format_value(arg))

        for key, value in (getattr(record, '_extra_kwargs', None) or {}).items():
            if self._is_json(value):
                lines.append(f'  {key}:')
                lines.append(self._format_value(value, indent=4))
            else:
                lines.append(f'  {key}: {value}')

        return '\n'.join(lines)

    @staticmethod
    def _is_json(value: str) -> bool:
        return (value.startswith('{') and value.endswith('}')) or (value.startswith('[') and value.endswith(']'))

    def _format_value(self, value: str, indent: int = 2) -> str:
        if self._is_json(value):
            try:
                parsed = json.loads(value)
            except (json.JSONDecodeError, ValueError):
                parsed = None
            # Short numeric vectors stay on one line
            if isinstance(parsed, list) and len(parsed) <= 8 and all(isinstance(v, (int, float)) for v in parsed):
                return ' ' * indent + json.dumps(parsed)
            if isinstance(parsed, (dict, list)):
                json_str = json.dumps(parsed, indent=2, default=_json_default)
                return '\n'.join(' ' * indent + line for line in json_str.split('\n'))
        return ' ' * indent + value


class _LoggerProxy:
    """
    Module-level logger facade, usable before and after `setup_logging`.

    Usage:
        from cornerbie import lg

        lg.setup_logging("runs/triangle/cornerbie.log")   # once at startup
        lg.info("Mesh built", panels=29, nodes=512)       # keyword context is printed below the message
    """

    def __init__(self) -> None:
        self._logger: Optional[logging.Logger] = None
        self.log_file_path: Optional[Path] = None

    # ---- Public API -----------------------------------------------------

    def setup_logging(
        self,
        log_file_path: str | Path,  # Where the log file is stored
        level: int = logging.INFO,  # Level from which logging to the file occurs
        to_stderr_level: int = logging.NOTSET,  # Level from which logging to stderr occurs
        max_bytes: int = 1_000_000,  # Max size of a log file, above this size it is rotated with a .1 suffix
        backup_count: int = 5,  # Max number of old log files to keep .1 .2 .3 etc.
        logger_name: str = LOGGER_NAME,
    ) -> logging.Logger:
        """Attach a rotating file handler (and optionally stderr) to the `cornerbie` logger and bind it."""
        log_path = Path(log_file_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.touch(exist_ok=True)
        self.log_file_path = log_path

        logger = logging.getLogger(logger_name)
        logger.setLevel(min(level, to_stderr_level) if to_stderr_level else level)
        logger.propagate = False  # do not duplicate to root

        # a second call replaces the handlers of the first
        for handler in list(logger.handlers):
            handler.close()
        logger.handlers.clear()

        formatter = StructuredFormatter(fmt=DEFAULT_FMT, datefmt=DEFAULT_DATEFMT)

        file_handler = RotatingFileHandler(log_path, maxBytes=max_bytes, backupCount=backup_count)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

        if to_stderr_level:
            stream_handler = logging.StreamHandler(sys.stderr)
            stream_handler.setLevel(to_stderr_level)
            stream_handler.setFormatter(formatter)
            logger.addHandler(stream_handler)

        self._logger = logger

        sys.excepthook = self._handle_uncaught_exception
        return logger

    @contextmanager
    def timed(self, stage: str, timings: Optional[dict] = None, **context: Any) -> Iterator[None]:
        """Log the wall time of a pipeline stage and optionally record it in `timings`."""
        start = time.perf_counter()
        self.debug(f'{stage} started', **context)
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            if timings is not None:
                timings[stage] = timings.get(stage, 0.0) + elapsed
            self.info(f'{stage} finished', seconds=round(elapsed, 6), **context)

    # ---- Level methods ---------------------------------------------------

    def _log(self, log_level: int, *args: Any, **kwargs: Any) -> None:
        logger = self._ensure_logger()
        if not args or not logger.isEnabledFor(log_level):
            return

        record = logger.makeRecord(logger.name, log_level, '(unknown file)', 0, str(args[0]), (), None)
        if len(args) > 1:
            record._extra_args = [_to_text(arg) for arg in args[1:]]
        if kwargs:
            record._extra_kwargs = {
                k: traceback.format_exc() if k == 'exc_info' and v else _to_text(v) for k, v in kwargs.items()
            }
        logger.handle(record)

    debug = partialmethod(_log, logging.DEBUG)
    info = partialmethod(_log, logging.INFO)
    warning = partialmethod(_log, logging.WARNING)
    error = partialmethod(_log, logging.ERROR)
    critical = partialmethod(_log, logging.CRITICAL)

    def __getattr__(self, name: str):
        # exception(), isEnabledFor() and friends go straight to the logger
        return getattr(self._ensure_logger(), name)

    # ---- Internals ------------------------------------------------------

    def _ensure_logger(self) -> logging.Logger:
        """The bound logger, or a WARNING-level stderr logger when setup_logging was never called."""
        if self._logger is not None:
            return self._logger

        logger = logging.getLogger(LOGGER_NAME)
        if not logger.handlers:
            logger.setLevel(logging.WARNING)
            logger.propagate = False
            bootstrap = logging.StreamHandler(sys.stderr)
            bootstrap.setFormatter(StructuredFormatter(fmt=DEFAULT_FMT, datefmt=DEFAULT_DATEFMT))
            logger.addHandler(bootstrap)
        self._logger = logger
        return logger

    def _handle_uncaught_exception(
        self,
        exc_type: Type[BaseException],
        exc_value: BaseException,
        exc_traceback: Optional[TracebackType],
    ) -> None:
        self._ensure_logger().critical(
            'Uncaught exception, cornerbie will exit',
            exc_info=(exc_type, exc_value, exc_traceback),
        )


lg = _LoggerProxy()
