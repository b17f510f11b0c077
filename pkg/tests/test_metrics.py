from __future__ import annotations

import itertools
import random
import statistics
from datetime import timedelta

import pytest

from veriflow.clock import EPOCH
from veriflow.errors import DomainError
from veriflow.metrics import (
    ChangeRecord,
    DeployEvent,
    IncidentEvent,
    ab_test,
    change_failure_rate,
    deployment_frequency,
    detection_rate,
    drift_score,
    lead_time,
    mttr,
    percent_change,
)


def _change(i, hours, deployed=True):
    committed = EPOCH + timedelta(days=i)
    return ChangeRecord(
        id=f"c{i}",
        committed_at=committed,
        deployed_at=committed + timedelta(hours=hours) if deployed else None,
    )


# -- lead time ----------------------------------------------------------------


def test_lead_time_mean_median():
    report = lead_time([_change(0, 10), _change(1, 20), _change(2, 30)])
    assert report.mean_hours == pytest.approx(20.0)
    assert report.median_hours == pytest.approx(20.0)
    assert report.excluded == 0


def test_lead_time_singleton():
    report = lead_time([_change(0, 13)])
    assert (report.mean_hours, report.median_hours) == (13.0, 13.0)


def test_lead_time_excludes_undeployed():
    report = lead_time([_change(0, 10), _change(1, 0, deployed=False)])
    assert report.excluded == 1


def test_lead_time_no_deployed_changes():
    with pytest.raises(DomainError):
        lead_time([_change(0, 0, deployed=False)])


def test_lead_time_reduction_matches_table():
    # 45h -> 13h is a 71.1% reduction
    assert percent_change(45.0, 13.0) == pytest.approx(-0.711, abs=0.001)


# -- deployment frequency --------------------------------------------------------


def test_deploys_per_week_unit_rate():
    deploys = [DeployEvent(id=f"d{i}", at=EPOCH + timedelta(days=i), outcome="success") for i in range(7)]
    window = (EPOCH, EPOCH + timedelta(days=7))
    assert deployment_frequency(deploys, window) == pytest.approx(7.0)


def test_deploys_increase_matches_table():
    assert percent_change(3.0, 7.0) == pytest.approx(1.333, abs=0.001)


def test_zero_deploys():
    assert deployment_frequency([], (EPOCH, EPOCH + timedelta(days=7))) == 0.0


def test_zero_length_window():
    with pytest.raises(DomainError):
        deployment_frequency([], (EPOCH, EPOCH))


# -- failure rate and MTTR ---------------------------------------------------------


def test_change_failure_rate():
    deploys = [
        DeployEvent(id=f"d{i}", at=EPOCH, outcome="failure" if i < 2 else "success")
        for i in range(10)
    ]
    assert change_failure_rate(deploys) == pytest.approx(0.2)


def test_change_failure_rate_empty():
    with pytest.raises(DomainError):
        change_failure_rate([])


def test_mttr_mean_and_reduction():
    incidents_before = [IncidentEvent(id="a", opened_at=EPOCH, resolved_at=EPOCH + timedelta(hours=24))]
    incidents_after = [IncidentEvent(id="b", opened_at=EPOCH, resolved_at=EPOCH + timedelta(hours=7))]
    before, _ = mttr(incidents_before)
    after, _ = mttr(incidents_after)
    assert before == pytest.approx(24.0)
    assert after == pytest.approx(7.0)
    assert percent_change(before, after) == pytest.approx(-0.708, abs=0.001)


def test_mttr_excludes_unresolved_with_count():
    incidents = [
        IncidentEvent(id="a", opened_at=EPOCH, resolved_at=EPOCH + timedelta(hours=10)),
        IncidentEvent(id="b", opened_at=EPOCH),
    ]
    hours, unresolved = mttr(incidents)
    assert hours == pytest.approx(10.0)
    assert unresolved == 1


def test_mttr_empty():
    with pytest.raises(DomainError):
        mttr([IncidentEvent(id="a", opened_at=EPOCH)])


# -- detection rate -----------------------------------------------------------------


def test_detection_rate_paper_values():
    assert detection_rate(142, 150) == pytest.approx(0.9467, abs=1e-4)
    assert detection_rate(125, 150) == pytest.approx(0.8333, abs=1e-4)


def test_detection_rate_zero():
    assert detection_rate(0, 150) == 0.0


def test_detection_rate_found_exceeds_injected():
    with pytest.raises(DomainError):
        detection_rate(151, 150)


def test_detection_rate_integer_identity():
    rng = random.Random(2)
    for _ in range(50):
        injected = rng.randint(1, 500)
        found = rng.randint(0, injected)
        assert detection_rate(found, injected) * injected == pytest.approx(found)


# -- permutation test -----------------------------------------------------------------


def test_ab_exact_small_example():
    report = ab_test([1, 2], [3, 4])
    assert report.method == "exact_permutation"
    assert report.p_value == pytest.approx(2 / 6)


def test_ab_identical_samples_p_one():
    report = ab_test([5, 5, 5], [5, 5, 5])
    assert report.p_value == pytest.approx(1.0)


def test_ab_sampled_deterministic():
    rng = random.Random(0)
    a = [rng.gauss(0, 1) for _ in range(40)]
    b = [rng.gauss(1, 1) for _ in range(40)]
    r1 = ab_test(a, b, n_resamples=2000, seed=5)
    r2 = ab_test(a, b, n_resamples=2000, seed=5)
    assert r1.method == "sampled_permutation"
    assert r1.p_value == r2.p_value
    assert 0 < r1.p_value <= 1


def test_ab_undersized_samples():
    with pytest.raises(DomainError):
        ab_test([1], [2, 3])


def _bruteforce_p(a, b):
    pooled = list(a) + list(b)
    n_a = len(a)
    observed = statistics.fmean(a) - statistics.fmean(b)
    hits = total = 0
    for combo in itertools.combinations(range(len(pooled)), n_a):
        in_a = [pooled[i] for i in combo]
        in_b = [pooled[i] for i in range(len(pooled)) if i not in combo]
        stat = statistics.fmean(in_a) - statistics.fmean(in_b)
        total += 1
        if abs(stat) >= abs(observed) - 1e-12 * max(1.0, abs(observed)):
            hits += 1
    return hits / total


def test_ab_exact_matches_bruteforce_enumeration():
    rng = random.Random(17)
    for _ in range(50):
        n_a = rng.randint(2, 4)
        n_b = rng.randint(2, 8 - n_a) if n_a < 6 else 2
        a = [rng.randint(0, 9) for _ in range(n_a)]
        b = [rng.randint(0, 9) for _ in range(n_b)]
        report = ab_test(a, b)
        assert report.method == "exact_permutation"
        assert report.p_value == pytest.approx(_bruteforce_p(a, b))


# -- drift ---------------------------------------------------------------------------


def test_drift_identical_windows():
    window = {"f": [1.0, 2.0, 3.0, 4.0]}
    report = drift_score(window, {"f": [1.0, 2.0, 3.0, 4.0]})
    assert report.score_max == 0.0
    assert not report.retrain_flag


def test_drift_disjoint_masses():
    report = drift_score({"f": [0.0] * 10}, {"f": [100.0] * 10}, bins=2)
    assert report.score_max == pytest.approx(1.0)
    assert report.retrain_flag


def test_drift_hand_computed():
    # masses (0.5, 0.5) vs (0.8, 0.2) over two bins -> TV 0.3
    a = {"f": [0.0] * 5 + [10.0] * 5}
    b = {"f": [0.0] * 8 + [10.0] * 2}
    report = drift_score(a, b, bins=2)
    assert report.per_feature["f"] == pytest.approx(0.3)


def test_drift_flag_threshold():
    a = {"f": [0.0] * 97 + [10.0] * 3}
    b = {"f": [0.0] * 100}
    report = drift_score(a, b, bins=2)
    assert report.per_feature["f"] == pytest.approx(0.03)
    assert report.retrain_flag  # at threshold


def test_drift_empty_window_rejected():
    with pytest.raises(DomainError):
        drift_score({"f": []}, {"f": [1.0]})


def test_drift_properties_symmetric_bounded_triangle():
    rng = random.Random(31)
    for _ in range(30):
        xs = {"f": [rng.uniform(0, 10) for _ in range(rng.randint(3, 40))]}
        ys = {"f": [rng.uniform(0, 10) for _ in range(rng.randint(3, 40))]}
        zs = {"f": [rng.uniform(0, 10) for _ in range(rng.randint(3, 40))]}
        # bin over a shared range so the metric space is consistent
        lo = 0.0
        hi = 10.0
        xs["f"] += [lo, hi]
        ys["f"] += [lo, hi]
        zs["f"] += [lo, hi]
        d_xy = drift_score(xs, ys).score_max
        d_yx = drift_score(ys, xs).score_max
        d_yz = drift_score(ys, zs).score_max
        d_xz = drift_score(xs, zs).score_max
        assert d_xy == pytest.approx(d_yx)
        assert 0.0 <= d_xy <= 1.0
        assert d_xz <= d_xy + d_yz + 1e-9
