"""DORA and testing-quality metrics over event streams.

Lead time, deployment frequency, change failure rate, and MTTR are pure
functions of the raw event slices, so any snapshot can be recomputed and
checked. Statistical significance uses a two-sided permutation test on the
difference of means: exact enumeration while the assignment count stays
small, seeded resampling otherwise. Drift is total-variation distance
between binned feature distributions.
"""

from __future__ import annotations

import itertools
import math
import random
import statistics
from dataclasses import dataclass
from datetime import datetime

from .errors import DomainError

EXACT_PERMUTATION_LIMIT = 20_000
HOURS = 3600.0


@dataclass(frozen=True)
class ChangeRecord:
    id: str
    committed_at: datetime
    deployed_at: datetime | None = None

    def __post_init__(self):
        if self.deployed_at is not None and self.deployed_at < self.committed_at:
            raise DomainError(f"change {self.id}: deployed before committed")


@dataclass(frozen=True)
class DeployEvent:
    id: str
    at: datetime
    outcome: str  # "success" | "failure"

    def __post_init__(self):
        if self.outcome not in ("success", "failure"):
            raise DomainError(f"deploy {self.id}: unknown outcome {self.outcome!r}")


@dataclass(frozen=True)
class IncidentEvent:
    id: str
    opened_at: datetime
    resolved_at: datetime | None = None

    def __post_init__(self):
        if self.resolved_at is not None and self.resolved_at < self.opened_at:
            raise DomainError(f"incident {self.id}: resolved before opened")


@dataclass(frozen=True)
class LeadTimeReport:
    mean_hours: float
    median_hours: float
    excluded: int


@dataclass(frozen=True)
class MetricsSnapshot:
    lead_time_hours: tuple[float, float]  # (mean, median)
    deploys_per_week: float
    change_failure_rate: float
    mttr_hours: float
    coverage: float
    detection_rate: float
    override_rate: float
    window: tuple[datetime, datetime]

    def to_dict(self) -> dict:
        from .clock import to_rfc3339

        return {
            "lead_time_hours": {
                "mean": self.lead_time_hours[0],
                "median": self.lead_time_hours[1],
            },
            "deploys_per_week": self.deploys_per_week,
            "change_failure_rate": self.change_failure_rate,
            "mttr_hours": self.mttr_hours,
            "coverage": self.coverage,
            "detection_rate": self.detection_rate,
            "override_rate": self.override_rate,
            "window": [to_rfc3339(self.window[0]), to_rfc3339(self.window[1])],
        }


@dataclass(frozen=True)
class AbTestReport:
    statistic: float
    p_value: float
    method: str  # "exact_permutation" | "sampled_permutation"
    n_resamples: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "n_resamples": self.n_resamples,
        }


@dataclass(frozen=True)
class DriftReport:
    per_feature: dict[str, float]
    score_max: float
    threshold: float
    retrain_flag: bool

    def to_dict(self) -> dict:
        return {
            "per_feature": dict(sorted(self.per_feature.items())),
            "score_max": self.score_max,
            "threshold": self.threshold,
            "retrain_flag": self.retrain_flag,
        }


def lead_time(changes: list[ChangeRecord]) -> LeadTimeReport:
    durations = [
        (c.deployed_at - c.committed_at).total_seconds() / HOURS
        for c in changes
        if c.deployed_at is not None
    ]
    if not durations:
        raise DomainError("no deployed changes to measure lead time on")
    excluded = len(changes) - len(durations)
    return LeadTimeReport(
        mean_hours=statistics.fmean(durations),
        median_hours=statistics.median(durations),
        excluded=excluded,
    )


def deployment_frequency(deploys: list[DeployEvent], window: tuple[datetime, datetime]) -> float:
    start, end = window
    weeks = (end - start).total_seconds() / (7 * 24 * HOURS)
    if weeks <= 0:
        raise DomainError("deployment window must have positive length")
    return len(deploys) / weeks


def change_failure_rate(deploys: list[DeployEvent]) -> float:
    if not deploys:
        raise DomainError("no deploys to compute failure rate on")
    failures = sum(1 for d in deploys if d.outcome == "failure")
    return failures / len(deploys)


def mttr(incidents: list[IncidentEvent]) -> tuple[float, int]:
    """Mean hours to resolution; unresolved incidents excluded, count reported."""
    durations = [
        (i.resolved_at - i.opened_at).total_seconds() / HOURS
        for i in incidents
        if i.resolved_at is not None
    ]
    if not durations:
        raise DomainError("no resolved incidents to compute MTTR on")
    return statistics.fmean(durations), len(incidents) - len(durations)


def detection_rate(found: int, injected: int) -> float:
    if injected <= 0:
        raise DomainError("injected count must be positive")
    if found > injected:
        raise DomainError(f"found ({found}) exceeds injected ({injected})")
    return found / injected


def percent_change(baseline: float, treated: float) -> float | None:
    if baseline == 0:
        return None
    return (treated - baseline) / baseline


def ab_test(
    samples_a: list[float],
    samples_b: list[float],
    n_resamples: int = 10_000,
    seed: int = 0,
) -> AbTestReport:
    """Two-sided permutation test on the difference of means.

    Exact enumeration of all group assignments when their count is at most
    20,000 (p = count of |stat| >= |observed|, identity included, over all
    assignments); otherwise seeded sampling with p = (hits + 1)/(n + 1).
    """
    if len(samples_a) < 2 or len(samples_b) < 2:
        raise DomainError("each sample needs at least 2 points")
    pooled = list(samples_a) + list(samples_b)
    n_a = len(samples_a)
    observed = statistics.fmean(samples_a) - statistics.fmean(samples_b)
    threshold = abs(observed) - 1e-12 * max(1.0, abs(observed))

    total = math.comb(len(pooled), n_a)
    if total <= EXACT_PERMUTATION_LIMIT:
        hits = 0
        pooled_sum = sum(pooled)
        n_b = len(pooled) - n_a
        for combo in itertools.combinations(range(len(pooled)), n_a):
            sum_a = sum(pooled[i] for i in combo)
            stat = sum_a / n_a - (pooled_sum - sum_a) / n_b
            if abs(stat) >= threshold:
                hits += 1
        return AbTestReport(
            statistic=observed,
            p_value=hits / total,
            method="exact_permutation",
            n_resamples=total,
        )

    rng = random.Random(seed)
    hits = 0
    n_b = len(pooled) - n_a
    work = list(pooled)
    for _ in range(n_resamples):
        rng.shuffle(work)
        sum_a = sum(work[:n_a])
        stat = sum_a / n_a - sum(work[n_a:]) / n_b
        if abs(stat) >= threshold:
            hits += 1
    return AbTestReport(
        statistic=observed,
        p_value=(hits + 1) / (n_resamples + 1),
        method="sampled_permutation",
        n_resamples=n_resamples,
    )


def _binned(values: list[float], lo: float, hi: float, bins: int) -> list[float]:
    counts = [0] * bins
    width = (hi - lo) / bins
    for v in values:
        if width == 0:
            idx = 0
        else:
            idx = min(int((v - lo) / width), bins - 1)
        counts[idx] += 1
    n = len(values)
    return [c / n for c in counts]


def drift_score(
    window_a: dict[str, list[float]],
    window_b: dict[str, list[float]],
    bins: int = 10,
    threshold: float = 0.03,
) -> DriftReport:
    """Per-feature total-variation distance between binned windows."""
    if bins < 2:
        raise DomainError("bins must be >= 2")
    if set(window_a) != set(window_b):
        raise DomainError("drift windows must share the same feature set")
    if not window_a:
        raise DomainError("drift windows must be non-empty")
    per_feature: dict[str, float] = {}
    for feature in sorted(window_a):
        a, b = window_a[feature], window_b[feature]
        if not a or not b:
            raise DomainError(f"feature {feature!r} has an empty window")
        lo, hi = min(min(a), min(b)), max(max(a), max(b))
        pa = _binned(a, lo, hi, bins)
        pb = _binned(b, lo, hi, bins)
        per_feature[feature] = 0.5 * sum(abs(x - y) for x, y in zip(pa, pb))
    score_max = max(per_feature.values())
    return DriftReport(
        per_feature=per_feature,
        score_max=score_max,
        threshold=threshold,
        retrain_flag=score_max >= threshold,
    )


def build_snapshot(
    changes: list[ChangeRecord],
    deploys: list[DeployEvent],
    incidents: list[IncidentEvent],
    window: tuple[datetime, datetime],
    coverage: float,
    detection: float,
    override_rate: float,
) -> MetricsSnapshot:
    lt = lead_time(changes)
    mttr_hours, _ = mttr(incidents)
    return MetricsSnapshot(
        lead_time_hours=(lt.mean_hours, lt.median_hours),
        deploys_per_week=deployment_frequency(deploys, window),
        change_failure_rate=change_failure_rate(deploys),
        mttr_hours=mttr_hours,
        coverage=coverage,
        detection_rate=detection,
        override_rate=override_rate,
        window=window,
    )
