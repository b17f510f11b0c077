"""In-process message bus with bounded retry and dead-lettering.

Failed deliveries are retried with exponential backoff: delay before
attempt n (n >= 2) is base * 2^(n-2), base 100 ms, so a message that never
succeeds is attempted at offsets 0, 100, 300, 700, 1500 ms and then
dead-lettered. Dead letters are appended to the audit chain when one is
attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .audit_log import AuditChain
from .errors import NotFoundError
from .jsonutil import canonical_bytes

BASE_DELAY_MS = 100.0
MAX_ATTEMPTS = 5


@dataclass
class BusMessage:
    topic: str
    payload: bytes
    attempt: int = 1
    max_attempts: int = MAX_ATTEMPTS
    next_delay_ms: float = BASE_DELAY_MS


@dataclass
class DeliveryResult:
    topic: str
    delivered: bool
    attempts: int
    offsets_ms: list[float] = field(default_factory=list)
    dead_letter: bool = False
    error: str | None = None
    value: object = None


class MessageBus:
    def __init__(self, clock, chain: AuditChain | None = None):
        self.clock = clock
        self.chain = chain
        self._handlers: dict[str, object] = {}

    def register(self, topic: str, handler) -> None:
        self._handlers[topic] = handler

    def dispatch_with_retry(self, topic: str, payload: bytes) -> DeliveryResult:
        handler = self._handlers.get(topic)
        if handler is None:
            raise NotFoundError(f"no handler registered for topic {topic!r}")
        start = self.clock.now()
        message = BusMessage(topic=topic, payload=payload)
        offsets: list[float] = []
        last_error: str | None = None
        while True:
            offsets.append((self.clock.now() - start).total_seconds() * 1000.0)
            try:
                value = handler(message.payload)
                return DeliveryResult(
                    topic=topic,
                    delivered=True,
                    attempts=message.attempt,
                    offsets_ms=offsets,
                    value=value,
                )
            except Exception as exc:  # handler failures drive the retry loop
                last_error = f"{type(exc).__name__}: {exc}"
            if message.attempt >= message.max_attempts:
                break
            self.clock.sleep(message.next_delay_ms / 1000.0)
            message.attempt += 1
            message.next_delay_ms *= 2

        if self.chain is not None:
            self.chain.append(
                actor="system",
                kind="sim_event",
                rationale=(
                    f"dead-letter: topic {topic} abandoned after "
                    f"{message.max_attempts} attempts ({last_error})"
                ),
                payload=canonical_bytes(
                    {"topic": topic, "attempts": message.max_attempts, "error": last_error}
                ),
                now=self.clock.now(),
            )
        return DeliveryResult(
            topic=topic,
            delivered=False,
            attempts=message.attempt,
            offsets_ms=offsets,
            dead_letter=True,
            error=last_error,
        )
