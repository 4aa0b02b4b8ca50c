"""Tests for retry with backoff."""

import pytest

from latentmate.retry import LaunchFailed, RetryConfig, calculate_delay, retry_launch

FAST = RetryConfig(max_retries=2, base_delay=0.0, max_delay=0.0)


class TestRetryConfig:
    """Tests for RetryConfig validation."""

    def test_defaults(self) -> None:
        """Test default values."""
        config = RetryConfig()
        assert config.max_retries == 2
        assert config.base_delay == 0.5
        assert OSError in config.retry_exceptions

    def test_max_below_base(self) -> None:
        """Test max_delay must not be below base_delay."""
        with pytest.raises(ValueError):
            RetryConfig(base_delay=2.0, max_delay=1.0)


class TestCalculateDelay:
    """Tests for the backoff schedule."""

    def test_exponential_without_jitter(self) -> None:
        """Test delays double until the cap."""
        config = RetryConfig(base_delay=0.5, max_delay=1.5, jitter=0.0)
        assert [calculate_delay(a, config) for a in range(4)] == [0.5, 1.0, 1.5, 1.5]

    def test_jitter_bounds(self) -> None:
        """Test jitter stays within its fraction."""
        config = RetryConfig(base_delay=1.0, max_delay=1.0, jitter=0.5)
        for _ in range(50):
            assert 0.5 <= calculate_delay(0, config) <= 1.5


class TestRetryLaunch:
    """Tests for retried launches."""

    async def test_succeeds_after_failures(self) -> None:
        """Test transient errors are retried."""
        calls = 0

        async def launch() -> str:
            nonlocal calls
            calls += 1
            if calls < 3:
                raise ConnectionError("not yet")
            return "ok"

        assert await retry_launch(launch, "engine", FAST) == "ok"
        assert calls == 3

    async def test_gives_up(self) -> None:
        """Test exhausted retries raise LaunchFailed chained to the last error."""
        calls = 0

        async def launch() -> None:
            nonlocal calls
            calls += 1
            raise FileNotFoundError("no such engine")

        with pytest.raises(LaunchFailed, match="cannot start engine after 3 attempt") as exc:
            await retry_launch(launch, "engine", FAST)
        assert calls == 3
        assert exc.value.attempts == 3
        assert isinstance(exc.value.__cause__, FileNotFoundError)

    async def test_error_type(self) -> None:
        """Test callers choose the subclass raised when retries run out."""

        class EngineMissing(LaunchFailed):
            pass

        async def launch() -> None:
            raise TimeoutError("no handshake")

        with pytest.raises(EngineMissing):
            await retry_launch(launch, "engine", FAST, EngineMissing)

    async def test_other_errors_not_retried(self) -> None:
        """Test errors outside retry_exceptions propagate at once."""
        calls = 0

        async def launch() -> None:
            nonlocal calls
            calls += 1
            raise KeyError("bad option")

        with pytest.raises(KeyError):
            await retry_launch(launch, "engine", FAST)
        assert calls == 1
