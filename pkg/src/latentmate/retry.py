"""Retry with exponential backoff for opponent engine launches.

A UCI opponent can fail to come up for transient reasons (binary still being
written, process table full, slow first handshake). Launches are retried with
jittered exponential backoff before the match gives up.
"""

import asyncio
import logging
import random
from collections.abc import Awaitable, Callable
from typing import TypeVar

from pydantic import BaseModel, Field, model_validator

from .errors import LatentMateError
from .logging import log_extra

R = TypeVar("R")


class LaunchFailed(LatentMateError):
    """A launch kept failing until the retries ran out."""

    def __init__(self, message: str, attempts: int = 0) -> None:
        super().__init__(message)
        self.attempts = attempts


class RetryConfig(BaseModel):
    """How often and how patiently a launch is retried."""

    max_retries: int = Field(default=2, ge=0, description="Retries after the first attempt")
    base_delay: float = Field(default=0.5, ge=0, description="Initial delay in seconds")
    max_delay: float = Field(default=5.0, ge=0, description="Maximum delay in seconds")
    exponential_base: float = Field(default=2.0, gt=1, description="Exponential backoff multiplier")
    jitter: float = Field(default=0.5, ge=0, le=1, description="Random jitter factor (0-1)")
    retry_exceptions: tuple[type[Exception], ...] = Field(
        default=(ConnectionError, TimeoutError, OSError),
        description="Launch errors worth another attempt",
    )

    model_config = {"frozen": False, "arbitrary_types_allowed": True}

    @model_validator(mode="after")
    def validate_delays(self) -> "RetryConfig":
        """Ensure max_delay >= base_delay."""
        if self.max_delay < self.base_delay:
            raise ValueError(
                f"max_delay ({self.max_delay}) must be >= base_delay ({self.base_delay})"
            )
        return self


def calculate_delay(attempt: int, config: RetryConfig) -> float:
    """Calculate delay with exponential backoff and jitter."""
    delay = min(config.base_delay * (config.exponential_base**attempt), config.max_delay)
    jitter_range = delay * config.jitter
    delay += random.uniform(-jitter_range, jitter_range)
    return max(0, delay)


async def retry_launch(
    launch: Callable[[], Awaitable[R]],
    target: str,
    config: RetryConfig,
    error: type[LaunchFailed] = LaunchFailed,
) -> R:
    """Run ``launch`` until it succeeds or ``config.max_retries`` retries are spent.

    Only ``config.retry_exceptions`` are retried; anything else propagates at once.

    Raises:
        LaunchFailed: (or the given subclass) after the last attempt, chained to its cause
    """
    attempts = config.max_retries + 1
    for attempt in range(1, attempts + 1):
        try:
            return await launch()
        except config.retry_exceptions as e:
            if attempt == attempts:
                log_extra(
                    "Launch failed", logging.ERROR, target=target, attempts=attempt, error=str(e)
                )
                message = f"cannot start {target} after {attempt} attempt(s): {e}"
                raise error(message, attempt) from e
            delay = calculate_delay(attempt - 1, config)
            log_extra(
                "Launch failed; retrying",
                logging.WARNING,
                target=target,
                attempt=attempt,
                delay=round(delay, 2),
                error=str(e),
            )
            await asyncio.sleep(delay)
    raise AssertionError("retry loop exited without a result")
