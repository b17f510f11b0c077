"""Append-only, hash-chained audit log.

Every entry binds (seq, timestamp, actor, kind, rationale, payload digest)
to the digest of the previous entry, so any in-place edit, reorder, or
splice is detectable by recomputing the chain. Entries are immutable;
the only way a chain changes is through append().

Digests are SHA-256 over a length-prefixed concatenation of the entry
fields: each field is UTF-8 encoded and preceded by its 8-byte big-endian
length, which makes the canonical form unambiguous (no separator-injection
ambiguity between fields).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .clock import parse_rfc3339, to_rfc3339
from .errors import DomainError, ParseError

GENESIS_DIGEST = "0" * 64

ENTRY_KINDS = frozenset(
    {"decision", "policy_verdict", "trust_transition", "review", "rollback", "sim_event"}
)

_EXPORT_FIELDS = (
    "seq",
    "timestamp",
    "actor",
    "kind",
    "rationale",
    "payload_digest",
    "prev_digest",
    "entry_digest",
)


def _length_prefixed(*fields: str) -> bytes:
    out = bytearray()
    for f in fields:
        raw = f.encode("utf-8")
        out += len(raw).to_bytes(8, "big")
        out += raw
    return bytes(out)


def payload_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def entry_digest_of(
    seq: int,
    timestamp: str,
    actor: str,
    kind: str,
    rationale: str,
    payload_hex: str,
    prev_hex: str,
) -> str:
    blob = _length_prefixed(str(seq), timestamp, actor, kind, rationale, payload_hex, prev_hex)
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    timestamp: datetime
    actor: str
    kind: str
    rationale: str
    payload_digest: str
    prev_digest: str
    entry_digest: str

    def to_line(self) -> str:
        record = {
            "seq": self.seq,
            "timestamp": to_rfc3339(self.timestamp),
            "actor": self.actor,
            "kind": self.kind,
            "rationale": self.rationale,
            "payload_digest": self.payload_digest,
            "prev_digest": self.prev_digest,
            "entry_digest": self.entry_digest,
        }
        # Fixed key order is part of the export contract; dicts preserve it.
        return json.dumps(record, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> "AuditEntry":
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad audit line: {exc}") from exc
        missing = [k for k in _EXPORT_FIELDS if k not in raw]
        if missing:
            raise ParseError(f"audit line missing fields: {missing}")
        return cls(
            seq=int(raw["seq"]),
            timestamp=parse_rfc3339(raw["timestamp"]),
            actor=str(raw["actor"]),
            kind=str(raw["kind"]),
            rationale=str(raw["rationale"]),
            payload_digest=str(raw["payload_digest"]),
            prev_digest=str(raw["prev_digest"]),
            entry_digest=str(raw["entry_digest"]),
        )


class AuditChain:
    """In-memory chain; see FileBackedAuditChain for the persistent variant."""

    def __init__(self, entries: list[AuditEntry] | None = None):
        self.entries: list[AuditEntry] = list(entries or [])

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def head_digest(self) -> str:
        return self.entries[-1].entry_digest if self.entries else GENESIS_DIGEST

    def append(
        self,
        actor: str,
        kind: str,
        rationale: str,
        payload: bytes,
        now: datetime,
    ) -> AuditEntry:
        if not rationale:
            raise DomainError("audit rationale must be non-empty")
        if kind not in ENTRY_KINDS:
            raise DomainError(f"unknown audit kind: {kind!r}")
        seq = len(self.entries)
        prev = self.head_digest
        ts = to_rfc3339(now)
        pd = payload_digest(payload)
        digest = entry_digest_of(seq, ts, actor, kind, rationale, pd, prev)
        entry = AuditEntry(
            seq=seq,
            timestamp=parse_rfc3339(ts),
            actor=actor,
            kind=kind,
            rationale=rationale,
            payload_digest=pd,
            prev_digest=prev,
            entry_digest=digest,
        )
        self.entries.append(entry)
        return entry

    def verify(self) -> int | None:
        """Return None when the chain is intact, else the first broken seq."""
        prev = GENESIS_DIGEST
        for i, e in enumerate(self.entries):
            if e.seq != i:
                return i
            if e.prev_digest != prev:
                return i
            recomputed = entry_digest_of(
                e.seq,
                to_rfc3339(e.timestamp),
                e.actor,
                e.kind,
                e.rationale,
                e.payload_digest,
                e.prev_digest,
            )
            if recomputed != e.entry_digest:
                return i
            prev = e.entry_digest
        return None

    def export(self, lo: int | None = None, hi: int | None = None) -> str:
        """JSON Lines export of the inclusive seq range [lo, hi]."""
        if lo is None:
            lo = 0
        if hi is None:
            hi = len(self.entries) - 1
        if self.entries == [] and lo == 0 and hi == -1:
            return ""
        if lo < 0 or hi >= len(self.entries) or lo > hi:
            raise DomainError(f"export range [{lo},{hi}] out of bounds for {len(self.entries)} entries")
        return "\n".join(e.to_line() for e in self.entries[lo : hi + 1]) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "AuditChain":
        entries = [AuditEntry.from_line(line) for line in text.splitlines() if line.strip()]
        return cls(entries)


class FileBackedAuditChain(AuditChain):
    """Chain persisted as an append-only file of export lines.

    The file is the recovery source of truth: loading verifies the full
    chain and refuses a broken one.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        entries: list[AuditEntry] = []
        if self.path.exists():
            entries = AuditChain.from_lines(self.path.read_text(encoding="utf-8")).entries
        super().__init__(entries)
        broken = self.verify()
        if broken is not None:
            raise DomainError(f"audit log {self.path} broken at seq {broken}")

    def append(self, actor, kind, rationale, payload, now) -> AuditEntry:
        entry = super().append(actor, kind, rationale, payload, now)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(entry.to_line() + "\n")
        return entry
