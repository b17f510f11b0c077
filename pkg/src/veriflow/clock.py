"""Injectable clocks. Simulations and tests use VirtualClock; `serve` defaults to real time."""

from __future__ import annotations

import time
from datetime import datetime, timedelta, timezone

EPOCH = datetime(2025, 1, 6, 0, 0, 0, tzinfo=timezone.utc)


def to_rfc3339(dt: datetime) -> str:
    """Render a UTC instant as a fixed-width RFC 3339 string (microseconds, Z)."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def parse_rfc3339(text: str) -> datetime:
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    dt = datetime.fromisoformat(cleaned)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


class VirtualClock:
    """Deterministic clock; sleep() advances simulated time instead of waiting."""

    def __init__(self, start: datetime = EPOCH):
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        self._now = start.astimezone(timezone.utc)

    def now(self) -> datetime:
        return self._now

    def advance(self, seconds: float) -> None:
        self._now = self._now + timedelta(seconds=seconds)

    def advance_to(self, instant: datetime) -> None:
        """Move forward to the given instant; never travels backwards."""
        if instant > self._now:
            self._now = instant

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)


class RealClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)

    def advance(self, seconds: float) -> None:
        raise RuntimeError("real clock cannot be advanced")

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)
