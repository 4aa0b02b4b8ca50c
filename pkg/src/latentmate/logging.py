"""Structured logging for LatentMate.

JSON-structured records for long training and match runs, human-readable lines
for interactive use. Everything goes to stderr: stdout belongs to the UCI
protocol when the engine is serving.
"""

import functools
import json
import logging
import os
import sys
import time
from collections.abc import AsyncGenerator, Callable, Generator
from contextlib import asynccontextmanager, contextmanager
from typing import Any, TypeVar

_log_format = os.environ.get("LATENTMATE_LOG_FORMAT", "text")
_log_level = os.environ.get("LATENTMATE_LOG_LEVEL", "INFO").upper()

logger = logging.getLogger("latentmate")
logger.setLevel(getattr(logging, _log_level, logging.INFO))


class JsonFormatter(logging.Formatter):
    """Format log records as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        log_data: dict[str, Any] = {
            "timestamp": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if hasattr(record, "extra_data"):
            extra_data: dict[str, Any] = getattr(record, "extra_data", {})
            log_data.update(extra_data)
        return json.dumps(log_data, default=str)


class TextFormatter(logging.Formatter):
    """Human-readable lines with structured fields appended as key=value."""

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        extra_data: dict[str, Any] = getattr(record, "extra_data", {})
        if extra_data:
            line += " " + " ".join(f"{k}={v}" for k, v in extra_data.items())
        return line


# Avoid adding multiple handlers
if not logger.handlers:
    handler = logging.StreamHandler(sys.stderr)
    if _log_format == "json":
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(
            TextFormatter(
                "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
    logger.addHandler(handler)


def log_extra(message: str, level: int = logging.INFO, **extra: Any) -> None:
    """Log a message with extra structured data."""
    if not logger.isEnabledFor(level):
        return
    record = logging.LogRecord(
        name=logger.name,
        level=level,
        pathname="",
        lineno=0,
        msg=message,
        args=(),
        exc_info=None,
    )
    record.extra_data = extra  # noqa: B010
    logger.handle(record)


def _finish(
    ctx: dict[str, Any], start: float, error: Exception | None, level: int = logging.INFO
) -> None:
    ctx["duration_ms"] = round((time.perf_counter() - start) * 1000, 2)
    ctx["success"] = error is None
    if error is None:
        log_extra(f"{ctx['operation']} completed", level, **ctx)
    else:
        ctx["error"] = str(error)
        ctx["error_type"] = type(error).__name__
        log_extra(f"{ctx['operation']} failed", logging.ERROR, **ctx)


@asynccontextmanager
async def timed_operation(
    name: str,
    **context: Any,
) -> AsyncGenerator[dict[str, Any], None]:
    """Context manager that times an async operation and logs it.

    Usage:
        async with timed_operation("play_match", games=10) as ctx:
            record = await run()
            ctx["wins"] = record.wins
    """
    start = time.perf_counter()
    ctx: dict[str, Any] = {"operation": name, **context}
    try:
        yield ctx
    except Exception as e:
        _finish(ctx, start, e)
        raise
    _finish(ctx, start, None)


@contextmanager
def timed_block(name: str, **context: Any) -> Generator[dict[str, Any], None, None]:
    """Synchronous twin of ``timed_operation`` for CPU-bound work."""
    start = time.perf_counter()
    ctx: dict[str, Any] = {"operation": name, **context}
    try:
        yield ctx
    except Exception as e:
        _finish(ctx, start, e)
        raise
    _finish(ctx, start, None)


F = TypeVar("F", bound=Callable[..., Any])


def timed(func: F) -> F:
    """Log each call's duration at DEBUG; failures go out at ERROR through ``_finish``."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        start = time.perf_counter()
        ctx: dict[str, Any] = {"operation": func.__name__}
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            _finish(ctx, start, e)
            raise
        _finish(ctx, start, None, logging.DEBUG)
        return result

    return wrapper  # type: ignore[return-value]
