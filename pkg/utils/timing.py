"""Wall-clock helpers for run summaries.

Model time never comes from here; these only stamp artifacts.
"""

import time
from datetime import UTC, datetime


def utc_now() -> datetime:
    """Current time as a timezone-aware UTC datetime."""
    return datetime.now(UTC)


class Stopwatch:
    """Elapsed wall-clock seconds since construction."""

    def __init__(self) -> None:
        self.started_at = utc_now()
        self._start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._start
