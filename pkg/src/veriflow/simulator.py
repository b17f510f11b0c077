"""Seeded, deterministic CI/CD pipeline simulation.

A scenario runs two arms over the same injected fault set. The manual arm
picks a random suite under the budget and misses each triggered defect
independently with probability (1 - detection skill). The AI arm runs the
whole machine: parse requirements, generate cases, converge the
generate-optimize-validate loop, execute the chosen suite, classify
outcomes with the rule/model ensemble, and push every resulting decision
through the policy/trust governor with simulated reviewers. Both arms emit
change/deploy/incident/decision streams for the metrics engine, and
identical (config, seed) pairs produce byte-identical runs.

Defect detection uses an invented but monotone rule: a defect on a covered
unit is triggered iff the case's oracle strength (assertions over 1+steps,
clamped to [0,1]) is at least the defect's subtlety, so stronger oracles
catch subtler defects. Fault sets ride on the SUT opaquely; generation and
optimization never read them.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

from .audit_log import AuditChain
from .clock import EPOCH, VirtualClock, to_rfc3339
from .errors import ConfigError, DomainError
from .generation import SutModel, TestCase, coverage, generate_cases, load_sut_model
from .ingest import parse_requirements
from .jsonutil import canonical_bytes, canonical_json
from .metrics import (
    AbTestReport,
    ChangeRecord,
    DeployEvent,
    IncidentEvent,
    MetricsSnapshot,
    ab_test,
    build_snapshot,
    percent_change,
)
from .optimizer import OptimizerConfig, run_feedback_loop
from .policy_trust import DecisionGovernor, DecisionRecord, load_policy_pack
from .resources import data_text, scenario_text
from .validation import (
    ExecutionRecord,
    LinearModel,
    ensemble_verdict,
    load_rule_pack,
    predict,
    rule_score,
    train_model,
)

HOURS = 3600.0
WEEK_HOURS = 168.0


@dataclass(frozen=True)
class InjectedDefect:
    id: str
    unit_id: str
    subtlety: float
    severity: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "unit_id": self.unit_id,
            "subtlety": self.subtlety,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class SubtletyDist:
    kind: str  # "uniform" | "fixed"
    a: float = 0.0
    b: float = 0.0

    def draw(self, rng: random.Random) -> float:
        if self.kind == "fixed":
            return self.a
        return rng.uniform(self.a, self.b)

    @classmethod
    def from_dict(cls, raw: dict) -> "SubtletyDist":
        kind = raw["kind"]
        if kind == "fixed":
            return cls(kind="fixed", a=raw["v"])
        if kind == "uniform":
            return cls(kind="uniform", a=raw["a"], b=raw["b"])
        raise ConfigError(f"unknown subtlety distribution {kind!r}")


@dataclass
class FaultySut:
    """A SUT model carrying its injected fault set opaquely.

    Only execution reads .defects; generators and the optimizer receive the
    plain model, which keeps them fault-blind by construction.
    """

    model: SutModel
    defects: tuple[InjectedDefect, ...]


def inject_defects(
    sut: SutModel, n: int, dist: SubtletyDist, seed: int
) -> tuple[FaultySut, list[InjectedDefect]]:
    if n < 0:
        raise DomainError("defect count must be non-negative")
    if n > 0 and not sut.coverage_units:
        raise DomainError("cannot inject defects into a SUT without coverage units")
    rng = random.Random(f"{seed}:inject")
    defects = []
    for i in range(n):
        unit = rng.choice(sut.coverage_units)
        subtlety = min(max(dist.draw(rng), 0.0), 1.0)
        severity = rng.choices(("minor", "major", "critical"), weights=(5, 3, 2))[0]
        defects.append(
            InjectedDefect(id=f"D{i + 1:03d}", unit_id=unit, subtlety=subtlety, severity=severity)
        )
    return FaultySut(model=sut, defects=tuple(defects)), defects


def oracle_strength(case: TestCase) -> float:
    return min(1.0, len(case.expected.assertions) / (1 + len(case.steps)))


def triggered_defects(case: TestCase, fsut: FaultySut) -> list[InjectedDefect]:
    strength = oracle_strength(case)
    return [
        d
        for d in fsut.defects
        if d.unit_id in case.covered_units and strength >= d.subtlety
    ]


def execute_case(
    case: TestCase,
    fsut: FaultySut,
    seed: int,
    flake_rate: float = 0.0,
    noise_fraction: float = 0.0,
) -> ExecutionRecord:
    """Execute one case against the faulty SUT; deterministic per seed.

    flake_rate injects spurious failures without a defect (the false-alarm
    class); noise_fraction renders a slice of records inconclusive, which
    degrades the validator's decisiveness without touching ground truth.
    """
    fsut.model.endpoint(case.steps[0].endpoint_id)  # unknown endpoint -> error
    rng = random.Random(f"{seed}:{case.id}")
    trig = triggered_defects(case, fsut)
    units = sorted(case.covered_units)
    hot_units = {d.unit_id for d in trig}
    historical = round(rng.uniform(0.0, 0.3), 3)

    if noise_fraction > 0 and rng.random() < noise_fraction:
        outcome = rng.choice(("fail", "pass"))
        observed = {u: round(rng.uniform(0.35, 0.6), 4) for u in units}
        mismatch = rng.choice((0, 1))
        return ExecutionRecord(
            case_id=case.id,
            outcome=outcome,
            observed=observed,
            expected=case.expected,
            duration=round(rng.uniform(20, 40), 3),
            context={
                "expected_mismatch": mismatch,
                "assertion_failures": mismatch,
                "mismatch_ratio": 0.4,
                "anomaly": round(rng.uniform(0.45, 0.6), 4),
                "corroboration": rng.choice((1, 2)),
                "retry_count": 0,
                "historical_failure_rate": historical,
            },
        )

    if trig:
        n_assert = len(case.expected.assertions)
        observed = {
            u: round(rng.uniform(0.95, 0.99), 4)
            if u in hot_units
            else round(rng.uniform(0.55, 0.8), 4)
            for u in units
        }
        return ExecutionRecord(
            case_id=case.id,
            outcome="fail",
            observed=observed,
            expected=case.expected,
            duration=round(rng.uniform(65, 90), 3),
            context={
                "expected_mismatch": n_assert,
                "assertion_failures": n_assert,
                "mismatch_ratio": 1.0,
                "anomaly": round(rng.uniform(0.8, 0.97), 4),
                "corroboration": 3,
                "retry_count": 0,
                "historical_failure_rate": historical,
            },
        )

    if flake_rate > 0 and rng.random() < flake_rate:
        outcome = rng.choice(("fail", "error"))
        observed = {u: round(rng.uniform(0.02, 0.08), 4) for u in units}
        return ExecutionRecord(
            case_id=case.id,
            outcome=outcome,
            observed=observed,
            expected=case.expected,
            duration=round(rng.uniform(2, 8), 3),
            context={
                "expected_mismatch": 0,
                "assertion_failures": 1,
                "mismatch_ratio": 0.0,
                "anomaly": round(rng.uniform(0.25, 0.45), 4),
                "corroboration": 1,
                "retry_count": 2,
                "historical_failure_rate": round(rng.uniform(0.4, 0.8), 3),
            },
        )

    observed = {u: round(rng.uniform(0.01, 0.06), 4) for u in units}
    return ExecutionRecord(
        case_id=case.id,
        outcome="pass",
        observed=observed,
        expected=case.expected,
        duration=round(rng.uniform(5, 15), 3),
        context={
            "expected_mismatch": 0,
            "assertion_failures": 0,
            "mismatch_ratio": 0.0,
            "anomaly": round(rng.uniform(0.02, 0.1), 4),
            "corroboration": 0,
            "retry_count": 0,
            "historical_failure_rate": historical,
        },
    )


def make_detection_estimator(fsut: FaultySut):
    """Fraction of the fault set a suite triggers; memoized per case id."""
    n = max(len(fsut.defects), 1)
    memo: dict[str, frozenset] = {}

    def estimator(suite: list[TestCase]) -> float:
        hit: set[str] = set()
        for case in suite:
            ids = memo.get(case.id)
            if ids is None:
                ids = frozenset(d.id for d in triggered_defects(case, fsut))
                memo[case.id] = ids
            hit |= ids
        return len(hit) / n

    return estimator


# -- scenario configuration --------------------------------------------------


@dataclass
class ArmParams:
    detection_skill: float = 1.0
    lead_time_hours: float = 45.0
    hours_per_cycle: float = 6.5
    deploys_per_week: int = 3
    mttr_hours: float = 24.0
    change_failure_rate: float = 0.15
    parity_fail_rate: float = 0.1
    flake_rate: float = 0.0

    @classmethod
    def from_dict(cls, raw: dict) -> "ArmParams":
        return cls(**{k: v for k, v in raw.items() if k in cls.__dataclass_fields__})


@dataclass
class SimConfig:
    scenario: str
    seed: int
    duration_weeks: int
    sut_fixture: str
    requirements_fixture: str
    n_defects: int
    n_training_defects: int
    subtlety: SubtletyDist
    manual: ArmParams
    ai: ArmParams
    optimizer_budget: float
    optimizer_iterations: int
    review_initial_override: float
    review_final_override: float
    review_response_hours: float
    lambda_grid: list[float]
    compliance_decisions: list[dict] | None = None
    loop_variants: int = 0
    reqs_per_variant: int = 6
    ambiguous_variants: list[int] = field(default_factory=list)
    noise_fraction: float = 0.5

    @classmethod
    def from_scenario(cls, name: str, seed: int | None = None) -> "SimConfig":
        raw = json.loads(scenario_text(name))
        loop = raw.get("loop", {})
        return cls(
            scenario=raw["name"],
            seed=raw["default_seed"] if seed is None else seed,
            duration_weeks=raw.get("duration_weeks", 8),
            sut_fixture=raw.get("sut", "bank.json"),
            requirements_fixture=raw.get("requirements", "requirements_bank.txt"),
            n_defects=raw.get("n_defects", 0),
            n_training_defects=raw.get("n_training_defects", raw.get("n_defects", 0)),
            subtlety=SubtletyDist.from_dict(raw.get("subtlety", {"kind": "uniform", "a": 0, "b": 0.9})),
            manual=ArmParams.from_dict(raw.get("manual", {})),
            ai=ArmParams.from_dict(raw.get("ai", {})),
            optimizer_budget=raw.get("optimizer", {}).get("budget", 30),
            optimizer_iterations=raw.get("optimizer", {}).get("iterations", 400),
            review_initial_override=raw.get("review", {}).get("initial_override_rate", 0.10),
            review_final_override=raw.get("review", {}).get("final_override_rate", 0.01),
            review_response_hours=raw.get("review", {}).get("response_hours", 6.0),
            lambda_grid=raw.get("lambda_grid", [0.001, 0.01, 0.1]),
            compliance_decisions=raw.get("compliance_decisions"),
            loop_variants=loop.get("variants", 0),
            reqs_per_variant=loop.get("reqs_per_variant", 6),
            ambiguous_variants=loop.get("ambiguous_variants", []),
            noise_fraction=loop.get("noise_fraction", 0.5),
        )


@dataclass
class SimRun:
    arm: str
    scenario: str
    seed: int
    changes: list[ChangeRecord]
    deploys: list[DeployEvent]
    incidents: list[IncidentEvent]
    decisions: list[dict]  # decision dict + disposition
    detections: list[str]
    blocked_noncompliant: int
    snapshot: MetricsSnapshot
    audit_head: str
    audit_lines: str
    suite_ids: list[str] = field(default_factory=list)
    convergence: dict | None = None

    @property
    def run_id(self) -> str:
        return f"{self.scenario}-{self.arm}-seed{self.seed}"

    def lead_time_samples(self) -> list[float]:
        return [
            (c.deployed_at - c.committed_at).total_seconds() / HOURS
            for c in self.changes
            if c.deployed_at is not None
        ]

    def bias_error_rate(self) -> float:
        if not self.decisions:
            return 0.0
        fails = sum(1 for d in self.decisions if d["decision"]["parity_gap"] >= 0.05)
        return fails / len(self.decisions)

    def summary_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "arm": self.arm,
            "scenario": self.scenario,
            "seed": self.seed,
            "snapshot": self.snapshot.to_dict(),
            "detections": sorted(self.detections),
            "blocked_noncompliant": self.blocked_noncompliant,
            "audit_head": self.audit_head,
            "suite_ids": sorted(self.suite_ids),
            "convergence": self.convergence,
            "counts": {
                "changes": len(self.changes),
                "deploys": len(self.deploys),
                "incidents": len(self.incidents),
                "decisions": len(self.decisions),
            },
        }

    def to_dir(self, root: Path) -> Path:
        out = Path(root) / self.run_id
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(
            canonical_json(self.summary_dict()) + "\n", encoding="utf-8"
        )
        (out / "changes.jsonl").write_text(
            "".join(
                canonical_json(
                    {
                        "id": c.id,
                        "committed_at": to_rfc3339(c.committed_at),
                        "deployed_at": to_rfc3339(c.deployed_at) if c.deployed_at else None,
                    }
                )
                + "\n"
                for c in self.changes
            ),
            encoding="utf-8",
        )
        (out / "deploys.jsonl").write_text(
            "".join(
                canonical_json({"id": d.id, "at": to_rfc3339(d.at), "outcome": d.outcome}) + "\n"
                for d in self.deploys
            ),
            encoding="utf-8",
        )
        (out / "incidents.jsonl").write_text(
            "".join(
                canonical_json(
                    {
                        "id": i.id,
                        "opened_at": to_rfc3339(i.opened_at),
                        "resolved_at": to_rfc3339(i.resolved_at) if i.resolved_at else None,
                    }
                )
                + "\n"
                for i in self.incidents
            ),
            encoding="utf-8",
        )
        (out / "decisions.jsonl").write_text(
            "".join(canonical_json(d) + "\n" for d in self.decisions), encoding="utf-8"
        )
        (out / "audit.log").write_text(self.audit_lines, encoding="utf-8")
        return out


def _deploy_times(weeks: int, per_week: int) -> list[float]:
    """Deploy offsets in hours from the epoch, evenly spaced inside each week."""
    times = []
    spacing = WEEK_HOURS / per_week
    for w in range(weeks):
        for j in range(per_week):
            times.append(w * WEEK_HOURS + (j + 1) * spacing)
    return times


def _severity_of(defect: InjectedDefect) -> str:
    return "high_risk" if defect.severity == "critical" else "routine"


def _load_model_inputs(cfg: SimConfig):
    sut = load_sut_model(data_text(cfg.sut_fixture))
    reqs = parse_requirements(data_text(cfg.requirements_fixture))
    return sut, reqs


def _train_validator(
    pool: list[TestCase], train_fsut: FaultySut, cfg: SimConfig
) -> LinearModel:
    """Fit the logistic validator on executions from historical builds.

    Even builds run against the training fault set, odd builds against a
    clean SUT, so the dataset carries both true defects and the flaky
    false-alarm class.
    """
    clean = FaultySut(model=train_fsut.model, defects=())
    dataset = []
    build = 0
    while len(dataset) < 200:
        fsut = train_fsut if build % 2 == 0 else clean
        for case in pool:
            rec = execute_case(case, fsut, seed=cfg.seed * 1000 + build, flake_rate=0.12)
            label = bool(triggered_defects(case, fsut)) and rec.outcome != "pass"
            dataset.append((rec, label))
        build += 1
    model, _report = train_model(dataset, cfg.lambda_grid, seed=cfg.seed)
    return model


def _ensemble_confidence(records, rules, model) -> float:
    """Mean decisiveness of the ensemble: max(confidence, 1 - confidence)."""
    if not records:
        return 0.0
    total = 0.0
    for rec in records:
        verdict = ensemble_verdict(rec.case_id, rule_score(rules, rec), predict(model, rec))
        total += max(verdict.confidence, 1.0 - verdict.confidence)
    return total / len(records)


def run_pipeline(arm: str, cfg: SimConfig) -> SimRun:
    if arm not in ("manual", "ai"):
        raise DomainError(f"unknown arm {arm!r}")
    sut, reqs = _load_model_inputs(cfg)
    eval_fsut, _ = inject_defects(sut, cfg.n_defects, cfg.subtlety, cfg.seed)
    if arm == "manual":
        return _run_manual(cfg, sut, reqs, eval_fsut)
    return _run_ai(cfg, sut, reqs, eval_fsut)


def _run_manual(cfg: SimConfig, sut, reqs, eval_fsut: FaultySut) -> SimRun:
    rng = random.Random(f"{cfg.seed}:manual")
    params = cfg.manual
    chain = AuditChain()

    pool = generate_cases(reqs, sut, cfg.seed)
    shuffled = list(pool)
    rng.shuffle(shuffled)
    suite: list[TestCase] = []
    spent = 0.0
    for case in shuffled:
        if spent + case.cost <= cfg.optimizer_budget:
            suite.append(case)
            spent += case.cost
    suite.sort(key=lambda c: c.id)

    triggered: set[str] = set()
    for case in suite:
        triggered |= {d.id for d in triggered_defects(case, eval_fsut)}
    skill_rng = random.Random(f"{cfg.seed}:manual:skill")
    detections = sorted(
        d for d in sorted(triggered) if skill_rng.random() < params.detection_skill
    )

    changes, deploys, incidents, decisions = [], [], [], []
    for i, offset in enumerate(_deploy_times(cfg.duration_weeks, params.deploys_per_week)):
        deploy_at = EPOCH + timedelta(hours=offset)
        lead = params.lead_time_hours * rng.uniform(0.9, 1.1)
        changes.append(
            ChangeRecord(
                id=f"chg-{i + 1:04d}",
                committed_at=deploy_at - timedelta(hours=lead),
                deployed_at=deploy_at,
            )
        )
        failed = rng.random() < params.change_failure_rate
        deploys.append(
            DeployEvent(id=f"dep-{i + 1:04d}", at=deploy_at, outcome="failure" if failed else "success")
        )
        if failed:
            incidents.append(
                IncidentEvent(
                    id=f"inc-{i + 1:04d}",
                    opened_at=deploy_at,
                    resolved_at=deploy_at
                    + timedelta(hours=params.mttr_hours * rng.uniform(0.9, 1.1)),
                )
            )
        gap = (
            round(rng.uniform(0.05, 0.12), 4)
            if rng.random() < params.parity_fail_rate
            else round(rng.uniform(0.0, 0.045), 4)
        )
        decision = DecisionRecord(
            id=f"man-dep-{i + 1:04d}",
            proposed_action="promote_build",
            severity="routine",
            confidence=round(rng.uniform(0.90, 0.99), 4),
            parity_gap=gap,
            compliance_flags=frozenset(),
            timestamp=deploy_at,
            rationale=f"manual release decision for deploy {i + 1}",
        )
        chain.append(
            actor="system",
            kind="decision",
            rationale=decision.rationale,
            payload=canonical_bytes(decision.to_dict()),
            now=deploy_at,
        )
        decisions.append({"decision": decision.to_dict(), "disposition": "applied"})

    window = (EPOCH, EPOCH + timedelta(hours=cfg.duration_weeks * WEEK_HOURS))
    snapshot = build_snapshot(
        changes,
        deploys,
        incidents,
        window,
        coverage=coverage(suite, sut).fraction,
        detection=len(detections) / cfg.n_defects if cfg.n_defects else 0.0,
        override_rate=0.0,
    )
    return SimRun(
        arm="manual",
        scenario=cfg.scenario,
        seed=cfg.seed,
        changes=changes,
        deploys=deploys,
        incidents=incidents,
        decisions=decisions,
        detections=detections,
        blocked_noncompliant=0,
        snapshot=snapshot,
        audit_head=chain.head_digest,
        audit_lines=chain.export() if len(chain) else "",
        suite_ids=[c.id for c in suite],
    )


def _run_ai(cfg: SimConfig, sut, reqs, eval_fsut: FaultySut) -> SimRun:
    rng = random.Random(f"{cfg.seed}:ai")
    params = cfg.ai
    clock = VirtualClock(EPOCH)
    chain = AuditChain()
    rules = load_rule_pack(data_text("rules_default.json"))
    policies = load_policy_pack(data_text("policy_default.json"))
    governor = DecisionGovernor(policies, chain, clock)

    train_fsut, _ = inject_defects(
        sut, cfg.n_training_defects, cfg.subtlety, cfg.seed + 9173
    )
    pool = generate_cases(reqs, sut, cfg.seed)
    model = _train_validator(pool, train_fsut, cfg)
    estimator = make_detection_estimator(train_fsut)

    def validator(suite: list[TestCase]) -> float:
        records = [
            execute_case(case, train_fsut, seed=cfg.seed + 31, flake_rate=0.0)
            for case in suite
        ]
        return _ensemble_confidence(records, rules, model)

    opt_cfg = OptimizerConfig(
        budget=cfg.optimizer_budget,
        iterations=cfg.optimizer_iterations,
        seed=cfg.seed,
    )
    report, suite = run_feedback_loop(
        reqs, sut, opt_cfg, validator, detection_estimator=estimator
    )

    # Execute the converged suite against the evaluation fault set.
    executions = [
        (case, execute_case(case, eval_fsut, seed=cfg.seed + 77, flake_rate=params.flake_rate))
        for case in suite
    ]
    verdicts = {}
    for case, rec in executions:
        verdicts[case.id] = ensemble_verdict(
            rec.case_id, rule_score(rules, rec), predict(model, rec)
        )

    # Candidate detections: defects triggered by a case whose record the
    # ensemble ruled a true defect.
    candidate: dict[str, float] = {}
    candidate_severity: dict[str, str] = {}
    for case, _rec in executions:
        verdict = verdicts[case.id]
        if verdict.verdict != "true_defect":
            continue
        for defect in triggered_defects(case, eval_fsut):
            candidate[defect.id] = max(candidate.get(defect.id, 0.0), verdict.confidence)
            candidate_severity[defect.id] = _severity_of(defect)

    def override_probability(hour_offset: float) -> float:
        total_hours = cfg.duration_weeks * WEEK_HOURS
        frac = min(max(hour_offset / total_hours, 0.0), 1.0)
        return (
            cfg.review_initial_override
            + (cfg.review_final_override - cfg.review_initial_override) * frac
        )

    blocked: set[str] = set()
    blocked_noncompliant = 0
    decisions: list[dict] = []

    def submit(decision: DecisionRecord, at_hours: float, defect_id: str | None = None):
        nonlocal blocked_noncompliant
        clock.advance_to(EPOCH + timedelta(hours=at_hours))
        outcome = governor.process(decision)
        disposition = outcome.disposition
        if outcome.disposition == "pending_review":
            clock.advance(cfg.review_response_hours * 3600)
            reject = rng.random() < override_probability(at_hours)
            item = governor.resolve_review(
                decision.id,
                "reject" if reject else "approve",
                reviewer="sim-reviewer",
                rationale="rejected by reviewer" if reject else "approved as proposed",
            )
            disposition = "rejected" if item.status == "rejected" else "approved"
        # A publication is policy-blocked when the verdict failed and the
        # decision ended rolled back or its escalation was turned down; a
        # reviewer overriding a policy-clean decision is an override, not a
        # policy block.
        policy_blocked = not outcome.verdict.passed and disposition in (
            "rolled_back",
            "rejected",
        )
        if defect_id is not None and policy_blocked:
            blocked.add(defect_id)
        if disposition == "rolled_back" and decision.compliance_flags:
            blocked_noncompliant += 1
        decisions.append(
            {
                "decision": decision.to_dict(),
                "disposition": disposition,
                "policy_passed": outcome.verdict.passed,
            }
        )

    # Interleave deploy decisions and detection decisions chronologically.
    deploy_offsets = _deploy_times(cfg.duration_weeks, params.deploys_per_week)
    detection_items = sorted(candidate.items())
    det_spacing = (
        cfg.duration_weeks * WEEK_HOURS / max(len(detection_items), 1)
    )
    events: list[tuple[float, str, object]] = []
    for i, offset in enumerate(deploy_offsets):
        events.append((offset, "deploy", i))
    for j, (defect_id, confidence) in enumerate(detection_items):
        events.append(((j + 0.5) * det_spacing, "detection", (defect_id, confidence)))
    if cfg.compliance_decisions:
        comp_spacing = cfg.duration_weeks * WEEK_HOURS / (len(cfg.compliance_decisions) + 1)
        for k, raw in enumerate(cfg.compliance_decisions):
            events.append(((k + 1) * comp_spacing, "compliance", raw))
    events.sort(key=lambda e: (e[0], e[1], str(e[2])))

    changes, deploys, incidents = [], [], []
    lead_base = max(report.cycles_used, 1) * params.hours_per_cycle
    for offset, kind, payload in events:
        if kind == "deploy":
            i = payload
            deploy_at = EPOCH + timedelta(hours=offset)
            lead = lead_base * rng.uniform(0.9, 1.1)
            changes.append(
                ChangeRecord(
                    id=f"chg-{i + 1:04d}",
                    committed_at=deploy_at - timedelta(hours=lead),
                    deployed_at=deploy_at,
                )
            )
            failed = rng.random() < params.change_failure_rate
            deploys.append(
                DeployEvent(
                    id=f"dep-{i + 1:04d}",
                    at=deploy_at,
                    outcome="failure" if failed else "success",
                )
            )
            if failed:
                incidents.append(
                    IncidentEvent(
                        id=f"inc-{i + 1:04d}",
                        opened_at=deploy_at,
                        resolved_at=deploy_at
                        + timedelta(hours=params.mttr_hours * rng.uniform(0.9, 1.1)),
                    )
                )
            gap = (
                round(rng.uniform(0.05, 0.12), 4)
                if rng.random() < params.parity_fail_rate
                else round(rng.uniform(0.0, 0.045), 4)
            )
            submit(
                DecisionRecord(
                    id=f"ai-dep-{i + 1:04d}",
                    proposed_action="promote_build",
                    severity="routine",
                    confidence=round(rng.uniform(0.955, 0.995), 4),
                    parity_gap=gap,
                    compliance_flags=frozenset(),
                    timestamp=EPOCH + timedelta(hours=offset),
                    rationale=f"promote build {i + 1}: suite green, coverage target met",
                ),
                offset,
            )
        elif kind == "detection":
            defect_id, confidence = payload
            gap = (
                round(rng.uniform(0.05, 0.12), 4)
                if rng.random() < params.parity_fail_rate
                else round(rng.uniform(0.0, 0.045), 4)
            )
            submit(
                DecisionRecord(
                    id=f"det-{defect_id}",
                    proposed_action="block_build",
                    severity=candidate_severity[defect_id],
                    confidence=round(min(confidence, 0.9999), 4),
                    parity_gap=gap,
                    compliance_flags=frozenset(),
                    timestamp=EPOCH + timedelta(hours=offset),
                    rationale=f"ensemble flagged defect {defect_id} as a true defect",
                ),
                offset,
                defect_id=defect_id,
            )
        else:  # compliance fixture decision
            raw = dict(payload)
            submit(
                DecisionRecord(
                    id=raw["id"],
                    proposed_action=raw.get("proposed_action", "publish_suite"),
                    severity=raw.get("severity", "routine"),
                    confidence=raw.get("confidence", 0.97),
                    parity_gap=raw.get("parity_gap", 0.01),
                    compliance_flags=frozenset(raw.get("compliance_flags", [])),
                    timestamp=EPOCH + timedelta(hours=offset),
                    rationale=raw.get("rationale", "scripted compliance check"),
                ),
                offset,
            )

    governor.expire_reviews()
    detections = sorted(d for d in candidate if d not in blocked)

    window = (EPOCH, EPOCH + timedelta(hours=cfg.duration_weeks * WEEK_HOURS))
    snapshot = build_snapshot(
        changes,
        deploys,
        incidents,
        window,
        coverage=coverage(suite, sut).fraction,
        detection=len(detections) / cfg.n_defects if cfg.n_defects else 0.0,
        override_rate=governor.trust.override_rate,
    )
    broken = chain.verify()
    if broken is not None:
        raise DomainError(f"audit chain broken at {broken} after simulation")
    return SimRun(
        arm="ai",
        scenario=cfg.scenario,
        seed=cfg.seed,
        changes=changes,
        deploys=deploys,
        incidents=incidents,
        decisions=decisions,
        detections=detections,
        blocked_noncompliant=blocked_noncompliant,
        snapshot=snapshot,
        audit_head=chain.head_digest,
        audit_lines=chain.export() if len(chain) else "",
        suite_ids=[c.id for c in suite],
        convergence=report.to_dict(),
    )


@dataclass
class ComparisonReport:
    per_metric: dict[str, dict]
    ab: AbTestReport
    bias_error_rates: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "per_metric": self.per_metric,
            "ab": self.ab.to_dict(),
            "bias_error_rates": {
                "baseline": self.bias_error_rates[0],
                "treated": self.bias_error_rates[1],
            },
        }


def compare(baseline: SimRun, treated: SimRun) -> ComparisonReport:
    if baseline.scenario != treated.scenario:
        raise DomainError(
            f"cannot compare runs from scenarios {baseline.scenario!r} and {treated.scenario!r}"
        )
    metrics = {
        "lead_time_mean_hours": (
            baseline.snapshot.lead_time_hours[0],
            treated.snapshot.lead_time_hours[0],
        ),
        "deploys_per_week": (
            baseline.snapshot.deploys_per_week,
            treated.snapshot.deploys_per_week,
        ),
        "change_failure_rate": (
            baseline.snapshot.change_failure_rate,
            treated.snapshot.change_failure_rate,
        ),
        "mttr_hours": (baseline.snapshot.mttr_hours, treated.snapshot.mttr_hours),
        "coverage": (baseline.snapshot.coverage, treated.snapshot.coverage),
        "detection_rate": (baseline.snapshot.detection_rate, treated.snapshot.detection_rate),
        "override_rate": (baseline.snapshot.override_rate, treated.snapshot.override_rate),
    }
    per_metric = {
        name: {
            "baseline": b,
            "treated": t,
            "percent_change": percent_change(b, t),
        }
        for name, (b, t) in metrics.items()
    }
    ab = ab_test(baseline.lead_time_samples(), treated.lead_time_samples(), seed=baseline.seed)
    return ComparisonReport(
        per_metric=per_metric,
        ab=ab,
        bias_error_rates=(baseline.bias_error_rate(), treated.bias_error_rate()),
    )


# -- convergence benchmark ---------------------------------------------------


def run_convergence_bench(cfg: SimConfig) -> dict:
    """Run the feedback loop over seeded requirement-set variants."""
    if cfg.loop_variants <= 0:
        raise ConfigError("scenario does not define loop variants")
    sut, reqs = _load_model_inputs(cfg)
    parsed = [r for r in reqs if not r.unparsed]
    rules = load_rule_pack(data_text("rules_default.json"))

    base_fsut, _ = inject_defects(sut, cfg.n_training_defects, cfg.subtlety, cfg.seed + 9173)
    pool = generate_cases(reqs, sut, cfg.seed)
    model = _train_validator(pool, base_fsut, cfg)

    results = []
    converged = 0
    for v in range(cfg.loop_variants):
        variant_rng = random.Random(f"{cfg.seed}:variant:{v}")
        subset = sorted(
            variant_rng.sample(range(len(parsed)), min(cfg.reqs_per_variant, len(parsed)))
        )
        variant_reqs = [parsed[i] for i in subset]
        variant_fsut, _ = inject_defects(
            sut, cfg.n_training_defects, cfg.subtlety, cfg.seed + 100 + v
        )
        noise = cfg.noise_fraction if v in cfg.ambiguous_variants else 0.0
        estimator = make_detection_estimator(variant_fsut)

        def validator(suite, _fsut=variant_fsut, _noise=noise, _v=v):
            records = [
                execute_case(case, _fsut, seed=cfg.seed + 31 + _v, noise_fraction=_noise)
                for case in suite
            ]
            return _ensemble_confidence(records, rules, model)

        opt_cfg = OptimizerConfig(
            budget=cfg.optimizer_budget,
            iterations=cfg.optimizer_iterations,
            seed=cfg.seed + v,
        )
        report, _suite = run_feedback_loop(
            variant_reqs, sut, opt_cfg, validator, detection_estimator=estimator
        )
        converged += int(report.converged)
        results.append(
            {
                "variant": v,
                "requirement_ids": [r.id for r in variant_reqs],
                "converged": report.converged,
                "cycles_used": report.cycles_used,
                "final_confidence": round(report.final_confidence, 4),
            }
        )
    return {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "variants": cfg.loop_variants,
        "converged_count": converged,
        "converged_fraction": converged / cfg.loop_variants,
        "results": results,
    }


def run_scenario(name: str, seed: int | None = None, arms: tuple[str, ...] = ("manual", "ai")):
    """Top-level entry: returns {'bench': ...} or {'manual': SimRun, 'ai': SimRun, 'comparison': ...}."""
    cfg = SimConfig.from_scenario(name, seed)
    if cfg.loop_variants > 0:
        return {"bench": run_convergence_bench(cfg)}
    out: dict = {}
    for arm in arms:
        out[arm] = run_pipeline(arm, cfg)
    if "manual" in out and "ai" in out:
        out["comparison"] = compare(out["manual"], out["ai"])
    return out
