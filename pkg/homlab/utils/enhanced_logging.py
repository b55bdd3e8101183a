"""Structured logging for numerical runs: run ids, operation timing, JSON lines"""
import json
import logging
import logging.handlers
import os
import sys
import threading
import time
import uuid
from contextlib import contextmanager
from functools import wraps
from typing import Any, Dict, Optional

# Attributes every LogRecord carries; anything else came in through ``extra``.
_RESERVED_RECORD_KEYS = frozenset(
    [
        'name', 'msg', 'args', 'levelname', 'levelno', 'pathname', 'filename',
        'module', 'exc_info', 'exc_text', 'stack_info', 'lineno', 'funcName',
        'created', 'msecs', 'relativeCreated', 'thread', 'threadName',
        'processName', 'process', 'message', 'taskName',
    ]
)


class CorrelationContext(threading.local):
    """Run id and running operation of the current thread"""

    correlation_id: Optional[str] = None
    operation: Optional[str] = None


correlation_context = CorrelationContext()


def new_run_id() -> str:
    """Start a new correlation id for the current thread and return it"""
    run_id = uuid.uuid4().hex[:12]
    correlation_context.correlation_id = run_id
    return run_id


class StructuredLogFilter(logging.Filter):
    """Stamps run id, operation and duration in ms on every record"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.correlation_id = correlation_context.correlation_id or 'unknown'
        record.operation = correlation_context.operation
        if not hasattr(record, 'category'):
            record.category = 'general'
        duration = getattr(record, 'operation_duration', None)
        if duration is not None:
            record.performance_ms = round(duration * 1000, 2)
        return True


class JSONFormatter(logging.Formatter):
    """One JSON object per line, extra fields included"""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            'timestamp': self.formatTime(record),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno,
        }
        if record.exc_info:
            entry['exception'] = self.formatException(record.exc_info)
        entry.update((key, value) for key, value in record.__dict__.items()
                     if key not in _RESERVED_RECORD_KEYS and key not in entry)
        return json.dumps(entry, default=str)


class HomlabLogger:
    """Logger wrapper; keyword arguments of each call land in ``record.details``"""

    def __init__(self, name: str):
        self.logger = logging.getLogger(name)

    def _log(self, level: int, message: str, category: str = 'general',
             operation_type: Optional[str] = None, operation_duration: Optional[float] = None,
             **details: Any) -> None:
        if not self.logger.isEnabledFor(level):
            return
        extra = {'category': category, 'operation_type': operation_type, 'details': details}
        if operation_duration is not None:
            extra['operation_duration'] = operation_duration
        self.logger.log(level, message, extra=extra)

    def debug(self, message: str, **kwargs):
        self._log(logging.DEBUG, message, **kwargs)

    def info(self, message: str, **kwargs):
        self._log(logging.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs):
        self._log(logging.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs):
        self._log(logging.ERROR, message, **kwargs)

    @contextmanager
    def operation_context(self, operation_name: str, category: str = 'operation', **details):
        """Log start, completion or failure of a block with its duration"""
        previous = correlation_context.operation
        correlation_context.operation = operation_name
        start = time.perf_counter()
        self.debug(f"Operation started: {operation_name}", category=category,
                   operation_type='start', **details)
        try:
            yield
        except Exception as e:
            self.error(f"Operation failed: {operation_name} - {e}", category=category,
                       operation_type='error', operation_duration=time.perf_counter() - start,
                       error_type=type(e).__name__, **details)
            raise
        else:
            self.info(f"Operation completed: {operation_name}", category=category,
                      operation_type='complete', operation_duration=time.perf_counter() - start,
                      **details)
        finally:
            correlation_context.operation = previous


def get_logger(name: str) -> HomlabLogger:
    return HomlabLogger(name)


def log_operation(operation_name: str, category: str = 'numerics'):
    """Run the decorated function inside ``operation_context``"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            with get_logger(func.__module__).operation_context(operation_name, category=category):
                return func(*args, **kwargs)
        return wrapper
    return decorator


def log_performance(threshold_ms: float = 1000):
    """Log calls slower than ``threshold_ms``"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            result = func(*args, **kwargs)
            duration = time.perf_counter() - start
            if duration * 1000 > threshold_ms:
                get_logger(func.__module__).info(
                    f"Slow operation: {func.__name__} took {duration * 1000:.2f}ms",
                    category='performance', operation_duration=duration,
                    function=func.__name__, threshold_ms=threshold_ms,
                )
            return result
        return wrapper
    return decorator


def install_handlers(logger: logging.Logger, settings: Dict[str, Any]) -> None:
    """Attach stderr (and optional rotating file) handlers to ``logger``; stdout stays clean"""
    for handler in list(logger.handlers):
        if getattr(handler, '_homlab_handler', False):
            logger.removeHandler(handler)
            handler.close()

    if settings.get('LOG_JSON_FORMAT'):
        formatter: logging.Formatter = JSONFormatter()
    else:
        formatter = logging.Formatter(
            '[%(asctime)s] %(levelname)s [%(correlation_id)s] in %(module)s.%(funcName)s:%(lineno)d - '
            '%(message)s'
        )

    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = settings.get('LOG_FILE')
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=settings.get('LOG_MAX_BYTES', 10485760),
            backupCount=settings.get('LOG_BACKUP_COUNT', 5),
        ))

    structured = StructuredLogFilter()
    for handler in handlers:
        handler._homlab_handler = True
        handler.setFormatter(formatter)
        handler.addFilter(structured)
        logger.addHandler(handler)

    logger.setLevel(getattr(logging, str(settings.get('HOMLAB_LOG_LEVEL', 'WARNING')).upper()))
