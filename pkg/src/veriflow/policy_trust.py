"""Policy evaluation, trust escalation, review queue, and rollback.

All mutations flow through DecisionGovernor, which forms one serialized
decision domain: every processed decision gets exactly one audit entry of
kind "decision", and every enqueue/resolve/expire/rollback appends exactly
one further entry. Violations always force their configured action, so a
decision failing the confidence gate can never be auto-applied regardless
of trust level.

Trust transitions: promotion needs a full window (Recommend -> Gated at
override rate <= 5% and intervention accuracy >= 90%; Gated -> Full at
override rate <= 2% with no critical violations in the window); a critical
violation arriving, or an override rate above 10%, demotes one level
immediately and dominates any promotion.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .audit_log import AuditChain
from .clock import parse_rfc3339, to_rfc3339
from .errors import ConfigError, ConflictError, DomainError, ExpiredError, NotFoundError
from .jsonutil import canonical_bytes

PROPOSED_ACTIONS = ("promote_build", "block_build", "publish_suite", "auto_merge_tests")
DECISION_SEVERITIES = ("routine", "high_risk")
TRUST_LEVELS = ("Recommend", "GatedAutonomy", "FullAutonomy")
WINDOW_OUTCOMES = ("applied", "overridden", "escalated", "agreed")

DEFAULT_WINDOW = 50
DEFAULT_REVIEW_HOURS = 24.0

PROMOTE_OVERRIDE_MAX = 0.05
PROMOTE_ACCURACY_MIN = 0.90
FULL_OVERRIDE_MAX = 0.02
DEMOTE_OVERRIDE_ABOVE = 0.10


@dataclass(frozen=True)
class DecisionRecord:
    id: str
    proposed_action: str
    severity: str
    confidence: float
    parity_gap: float
    compliance_flags: frozenset[str]
    timestamp: datetime
    rationale: str

    def __post_init__(self):
        if self.proposed_action not in PROPOSED_ACTIONS:
            raise DomainError(f"unknown proposed action {self.proposed_action!r}")
        if self.severity not in DECISION_SEVERITIES:
            raise DomainError(f"unknown decision severity {self.severity!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError("confidence must be in [0,1]")
        if not 0.0 <= self.parity_gap <= 1.0:
            raise DomainError("parity_gap must be in [0,1]")
        if not self.rationale:
            raise DomainError("decision rationale must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "proposed_action": self.proposed_action,
            "severity": self.severity,
            "confidence": self.confidence,
            "parity_gap": self.parity_gap,
            "compliance_flags": sorted(self.compliance_flags),
            "timestamp": to_rfc3339(self.timestamp),
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DecisionRecord":
        return cls(
            id=raw["id"],
            proposed_action=raw["proposed_action"],
            severity=raw["severity"],
            confidence=raw["confidence"],
            parity_gap=raw["parity_gap"],
            compliance_flags=frozenset(raw.get("compliance_flags", [])),
            timestamp=parse_rfc3339(raw["timestamp"]),
            rationale=raw["rationale"],
        )


_FIELD_COMPARATORS = {
    "confidence": {"ge", "lt"},
    "parity_gap": {"ge", "lt"},
    "compliance_flags": {"empty"},
}


@dataclass(frozen=True)
class PolicyRule:
    id: str
    field: str
    comparator: str
    threshold: object
    severity: str  # "warning" | "critical"
    on_violation: str  # "rollback" | "escalate"

    def __post_init__(self):
        allowed = _FIELD_COMPARATORS.get(self.field)
        if allowed is None:
            raise ConfigError(f"policy rule {self.id}: unknown field {self.field!r}")
        if self.comparator not in allowed:
            raise ConfigError(
                f"policy rule {self.id}: comparator {self.comparator!r} "
                f"incompatible with field {self.field!r}"
            )
        if self.severity not in ("warning", "critical"):
            raise ConfigError(f"policy rule {self.id}: bad severity {self.severity!r}")
        if self.on_violation not in ("rollback", "escalate"):
            raise ConfigError(f"policy rule {self.id}: bad on_violation {self.on_violation!r}")

    def holds_for(self, d: DecisionRecord) -> tuple[bool, object]:
        if self.field == "compliance_flags":
            return (len(d.compliance_flags) == 0, sorted(d.compliance_flags))
        observed = getattr(d, self.field)
        if self.comparator == "ge":
            return (observed >= self.threshold, observed)
        return (observed < self.threshold, observed)


def load_policy_pack(doc: str | list) -> list[PolicyRule]:
    raw = json.loads(doc) if isinstance(doc, str) else doc
    return [
        PolicyRule(
            id=item["id"],
            field=item["field"],
            comparator=item["comparator"],
            threshold=item.get("threshold"),
            severity=item.get("severity", "critical"),
            on_violation=item["on_violation"],
        )
        for item in raw
    ]


@dataclass(frozen=True)
class Violation:
    rule_id: str
    observed: object
    action: str
    severity: str


@dataclass(frozen=True)
class PolicyVerdict:
    decision_id: str
    passed: bool
    violations: tuple[Violation, ...]

    def to_dict(self) -> dict:
        return {
            "decision_id": self.decision_id,
            "passed": self.passed,
            "violations": [
                {
                    "rule_id": v.rule_id,
                    "observed": v.observed,
                    "action": v.action,
                    "severity": v.severity,
                }
                for v in self.violations
            ],
        }


def evaluate_policies(policies: list[PolicyRule], d: DecisionRecord) -> PolicyVerdict:
    """Evaluate every rule (no short-circuit) and list all violations."""
    violations = []
    for rule in policies:
        ok, observed = rule.holds_for(d)
        if not ok:
            violations.append(
                Violation(
                    rule_id=rule.id,
                    observed=observed,
                    action=rule.on_violation,
                    severity=rule.severity,
                )
            )
    return PolicyVerdict(decision_id=d.id, passed=not violations, violations=tuple(violations))


def effective_authority(level: str, severity: str) -> str:
    """Authority table for policy-clean decisions.

    Violations are handled before this table applies: they always force
    their configured action, so a violating decision never reaches
    auto_apply even under FullAutonomy.
    """
    if level not in TRUST_LEVELS:
        raise DomainError(f"unknown trust level {level!r}")
    if severity not in DECISION_SEVERITIES:
        raise DomainError(f"unknown severity {severity!r}")
    if level == "Recommend":
        return "recommend_only"
    if level == "GatedAutonomy":
        return "auto_apply" if severity == "routine" else "require_review"
    return "auto_apply"


@dataclass
class TrustState:
    level: str = "Recommend"
    window: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_WINDOW))
    window_size: int = DEFAULT_WINDOW

    def __post_init__(self):
        if self.level not in TRUST_LEVELS:
            raise DomainError(f"unknown trust level {self.level!r}")
        if self.window.maxlen != self.window_size:
            self.window = deque(self.window, maxlen=self.window_size)

    @property
    def override_rate(self) -> float:
        if not self.window:
            return 0.0
        return sum(1 for outcome, _ in self.window if outcome == "overridden") / len(self.window)

    @property
    def intervention_accuracy(self) -> float:
        """Among reviewed decisions in the window, fraction the reviewer approved."""
        reviewed = [(o, c) for o, c in self.window if o in ("agreed", "overridden")]
        if not reviewed:
            return 0.0
        return sum(1 for o, _ in reviewed if o == "agreed") / len(reviewed)

    @property
    def critical_violations_in_window(self) -> int:
        return sum(1 for _, critical in self.window if critical)

    def record(self, outcome: str, critical: bool = False) -> None:
        if outcome not in WINDOW_OUTCOMES:
            raise DomainError(f"unknown window outcome {outcome!r}")
        self.window.append((outcome, critical))

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "window": [[o, c] for o, c in self.window],
            "window_size": self.window_size,
            "override_rate": self.override_rate,
            "intervention_accuracy": self.intervention_accuracy,
            "critical_violations_in_window": self.critical_violations_in_window,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrustState":
        size = raw.get("window_size", DEFAULT_WINDOW)
        state = cls(level=raw["level"], window_size=size)
        for outcome, critical in raw.get("window", []):
            state.record(outcome, critical)
        return state


@dataclass(frozen=True)
class EscalationEvent:
    from_level: str
    to_level: str
    reason: str

    def to_dict(self) -> dict:
        return {"from_level": self.from_level, "to_level": self.to_level, "reason": self.reason}


def apply_trust_transition(
    state: TrustState, new_critical: bool = False
) -> tuple[TrustState, EscalationEvent | None]:
    """One transition step; at most one level of movement, demotion first.

    new_critical marks that the outcome just recorded carried a critical
    policy violation; demotion on arrival is immediate, while a critical
    already sitting in the window only blocks Gated -> Full promotion.
    """
    level_idx = TRUST_LEVELS.index(state.level)
    if new_critical or state.override_rate > DEMOTE_OVERRIDE_ABOVE:
        if level_idx == 0:
            return state, None
        new_level = TRUST_LEVELS[level_idx - 1]
        reason = (
            "critical policy violation"
            if new_critical
            else f"override rate {state.override_rate:.2f} above {DEMOTE_OVERRIDE_ABOVE}"
        )
        event = EscalationEvent(from_level=state.level, to_level=new_level, reason=reason)
        demoted = TrustState(new_level, deque(state.window, maxlen=state.window_size), state.window_size)
        return demoted, event

    if len(state.window) < state.window_size:
        return state, None

    if (
        state.level == "Recommend"
        and state.override_rate <= PROMOTE_OVERRIDE_MAX
        and state.intervention_accuracy >= PROMOTE_ACCURACY_MIN
    ):
        event = EscalationEvent(
            from_level="Recommend",
            to_level="GatedAutonomy",
            reason=(
                f"override rate {state.override_rate:.2f} <= {PROMOTE_OVERRIDE_MAX}, "
                f"intervention accuracy {state.intervention_accuracy:.2f} >= {PROMOTE_ACCURACY_MIN}"
            ),
        )
        promoted = TrustState(
            "GatedAutonomy", deque(state.window, maxlen=state.window_size), state.window_size
        )
        return promoted, event

    if (
        state.level == "GatedAutonomy"
        and state.override_rate <= FULL_OVERRIDE_MAX
        and state.critical_violations_in_window == 0
    ):
        event = EscalationEvent(
            from_level="GatedAutonomy",
            to_level="FullAutonomy",
            reason=(
                f"override rate {state.override_rate:.2f} <= {FULL_OVERRIDE_MAX}, "
                "no critical violations in window"
            ),
        )
        promoted = TrustState(
            "FullAutonomy", deque(state.window, maxlen=state.window_size), state.window_size
        )
        return promoted, event

    return state, None


@dataclass
class ReviewItem:
    decision: DecisionRecord
    enqueued_at: datetime
    deadline: datetime
    status: str = "pending"  # pending | approved | rejected | expired_auto_rejected
    reviewer: str | None = None
    reviewer_rationale: str | None = None
    resolved_at: datetime | None = None

    def to_dict(self) -> dict:
        return {
            "decision": self.decision.to_dict(),
            "enqueued_at": to_rfc3339(self.enqueued_at),
            "deadline": to_rfc3339(self.deadline),
            "status": self.status,
            "reviewer": self.reviewer,
            "reviewer_rationale": self.reviewer_rationale,
            "resolved_at": to_rfc3339(self.resolved_at) if self.resolved_at else None,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ReviewItem":
        return cls(
            decision=DecisionRecord.from_dict(raw["decision"]),
            enqueued_at=parse_rfc3339(raw["enqueued_at"]),
            deadline=parse_rfc3339(raw["deadline"]),
            status=raw.get("status", "pending"),
            reviewer=raw.get("reviewer"),
            reviewer_rationale=raw.get("reviewer_rationale"),
            resolved_at=parse_rfc3339(raw["resolved_at"]) if raw.get("resolved_at") else None,
        )


@dataclass(frozen=True)
class RollbackRecord:
    decision_id: str
    reason: str
    at: datetime

    def to_dict(self) -> dict:
        return {"decision_id": self.decision_id, "reason": self.reason, "at": to_rfc3339(self.at)}


@dataclass
class GovernedOutcome:
    decision: DecisionRecord
    verdict: PolicyVerdict
    authority: str
    disposition: str  # "applied" | "pending_review" | "rolled_back"
    review_item: ReviewItem | None = None
    rollback: RollbackRecord | None = None
    trust_events: list[EscalationEvent] = field(default_factory=list)


class DecisionGovernor:
    """Single serialized decision domain: policies, trust, reviews, audit."""

    def __init__(
        self,
        policies: list[PolicyRule],
        chain: AuditChain,
        clock,
        window_size: int = DEFAULT_WINDOW,
        review_hours: float = DEFAULT_REVIEW_HOURS,
    ):
        self.policies = policies
        self.chain = chain
        self.clock = clock
        self.review_hours = review_hours
        self.trust = TrustState(window_size=window_size)
        self.queue: dict[str, ReviewItem] = {}
        self.rollbacks: dict[str, RollbackRecord] = {}
        self.transitions: list[EscalationEvent] = []
        self._decisions: dict[str, DecisionRecord] = {}
        self._had_critical: dict[str, bool] = {}

    # -- trust plumbing -----------------------------------------------------

    def _transition(self, new_critical: bool) -> list[EscalationEvent]:
        self.trust, event = apply_trust_transition(self.trust, new_critical)
        if event is None:
            return []
        self.transitions.append(event)
        self.chain.append(
            actor="system",
            kind="trust_transition",
            rationale=event.reason,
            payload=canonical_bytes(event.to_dict()),
            now=self.clock.now(),
        )
        return [event]

    # -- decision intake ----------------------------------------------------

    def process(self, d: DecisionRecord) -> GovernedOutcome:
        """Evaluate policies, derive authority, and apply or escalate."""
        if d.id in self._decisions:
            raise ConflictError(f"decision {d.id!r} already processed")
        self._decisions[d.id] = d
        verdict = evaluate_policies(self.policies, d)
        critical = any(v.severity == "critical" for v in verdict.violations)
        self._had_critical[d.id] = critical
        self.chain.append(
            actor="system",
            kind="decision",
            rationale=d.rationale,
            payload=canonical_bytes({"decision": d.to_dict(), "verdict": verdict.to_dict()}),
            now=self.clock.now(),
        )

        events: list[EscalationEvent] = []
        if not verdict.passed:
            wants_rollback = any(v.action == "rollback" for v in verdict.violations)
            if wants_rollback:
                rb = self._rollback(d, verdict)
                self.trust.record("escalated", critical)
                events += self._transition(new_critical=critical)
                return GovernedOutcome(
                    decision=d,
                    verdict=verdict,
                    authority="require_review",
                    disposition="rolled_back",
                    rollback=rb,
                    trust_events=events,
                )
            item = self._enqueue(d)
            events += self._transition(new_critical=critical)
            return GovernedOutcome(
                decision=d,
                verdict=verdict,
                authority="require_review",
                disposition="pending_review",
                review_item=item,
                trust_events=events,
            )

        authority = effective_authority(self.trust.level, d.severity)
        if authority == "auto_apply":
            self.trust.record("applied", False)
            events += self._transition(new_critical=False)
            return GovernedOutcome(
                decision=d,
                verdict=verdict,
                authority=authority,
                disposition="applied",
                trust_events=events,
            )
        item = self._enqueue(d)
        return GovernedOutcome(
            decision=d,
            verdict=verdict,
            authority=authority,
            disposition="pending_review",
            review_item=item,
            trust_events=events,
        )

    # -- review queue -------------------------------------------------------

    def _enqueue(self, d: DecisionRecord) -> ReviewItem:
        if d.id in self.queue:
            raise ConflictError(f"decision {d.id!r} already enqueued for review")
        now = self.clock.now()
        item = ReviewItem(
            decision=d,
            enqueued_at=now,
            deadline=now + timedelta(hours=self.review_hours),
        )
        self.queue[d.id] = item
        self.chain.append(
            actor="system",
            kind="review",
            rationale=f"enqueued for review: {d.rationale}",
            payload=canonical_bytes(item.to_dict()),
            now=now,
        )
        return item

    def enqueue_review(self, d: DecisionRecord) -> ReviewItem:
        if d.id not in self._decisions:
            self._decisions[d.id] = d
            self._had_critical.setdefault(d.id, False)
        return self._enqueue(d)

    def resolve_review(
        self, decision_id: str, resolution: str, reviewer: str, rationale: str
    ) -> ReviewItem:
        if resolution not in ("approve", "reject"):
            raise DomainError(f"resolution must be approve or reject, got {resolution!r}")
        if not rationale:
            raise DomainError("reviewer rationale must be non-empty")
        item = self.queue.get(decision_id)
        if item is None:
            raise NotFoundError(f"no review item for decision {decision_id!r}")
        if item.status != "pending":
            raise ConflictError(
                f"review for {decision_id!r} already resolved: {item.status}"
            )
        now = self.clock.now()
        if now > item.deadline:
            raise ExpiredError(
                f"review for {decision_id!r} is past its deadline; run expire_reviews"
            )
        item.status = "approved" if resolution == "approve" else "rejected"
        item.reviewer = reviewer
        item.reviewer_rationale = rationale
        item.resolved_at = now
        outcome = "agreed" if resolution == "approve" else "overridden"
        critical = self._had_critical.get(decision_id, False)
        self.trust.record(outcome, critical)
        self.chain.append(
            actor=reviewer,
            kind="review",
            rationale=rationale,
            payload=canonical_bytes(item.to_dict()),
            now=now,
        )
        self._transition(new_critical=False)
        return item

    def expire_reviews(self) -> list[ReviewItem]:
        """Fail-safe expiry: pending items past deadline become auto-rejected."""
        now = self.clock.now()
        expired = []
        for item in self.queue.values():
            if item.status == "pending" and now > item.deadline:
                item.status = "expired_auto_rejected"
                item.resolved_at = now
                critical = self._had_critical.get(item.decision.id, False)
                self.trust.record("escalated", critical)
                self.chain.append(
                    actor="system",
                    kind="review",
                    rationale="review window elapsed; auto-rejected (fail-safe)",
                    payload=canonical_bytes(item.to_dict()),
                    now=now,
                )
                self._transition(new_critical=False)
                expired.append(item)
        return expired

    # -- rollback -----------------------------------------------------------

    def _rollback(self, d: DecisionRecord, verdict: PolicyVerdict) -> RollbackRecord:
        reason = ",".join(v.rule_id for v in verdict.violations if v.action == "rollback")
        return self.rollback(d, reason)

    def rollback(self, d: DecisionRecord, reason: str) -> RollbackRecord:
        if not reason:
            raise DomainError("rollback reason must be non-empty")
        if d.id not in self._decisions:
            raise NotFoundError(f"cannot roll back unknown decision {d.id!r}")
        if d.id in self.rollbacks:
            raise ConflictError(f"decision {d.id!r} already rolled back")
        now = self.clock.now()
        record = RollbackRecord(decision_id=d.id, reason=reason, at=now)
        self.rollbacks[d.id] = record
        self.chain.append(
            actor="system",
            kind="rollback",
            rationale=f"rolled back {d.id}: {reason}",
            payload=canonical_bytes(record.to_dict()),
            now=now,
        )
        return record

    # -- persistence --------------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "trust": self.trust.to_dict(),
            "queue": {k: v.to_dict() for k, v in sorted(self.queue.items())},
            "rollbacks": {k: v.to_dict() for k, v in sorted(self.rollbacks.items())},
            "transitions": [t.to_dict() for t in self.transitions],
            "had_critical": dict(sorted(self._had_critical.items())),
        }

    def load_snapshot(self, raw: dict) -> None:
        self.trust = TrustState.from_dict(raw["trust"])
        self.queue = {k: ReviewItem.from_dict(v) for k, v in raw.get("queue", {}).items()}
        for item in self.queue.values():
            self._decisions[item.decision.id] = item.decision
        self.rollbacks = {
            k: RollbackRecord(
                decision_id=v["decision_id"], reason=v["reason"], at=parse_rfc3339(v["at"])
            )
            for k, v in raw.get("rollbacks", {}).items()
        }
        self.transitions = [
            EscalationEvent(t["from_level"], t["to_level"], t["reason"])
            for t in raw.get("transitions", [])
        ]
        self._had_critical.update(raw.get("had_critical", {}))
