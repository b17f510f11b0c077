from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from veriflow.clock import EPOCH, VirtualClock
from veriflow.service import create_app


@pytest.fixture()
def client(tmp_path):
    clock = VirtualClock(EPOCH)
    app = create_app(tmp_path / "data", clock=clock)
    with TestClient(app) as test_client:
        test_client.clock = clock
        test_client.data_dir = tmp_path / "data"
        yield test_client


def _simulate(client, scenario="compliance", seed=None):
    body = {"scenario": scenario}
    if seed is not None:
        body["seed"] = seed
    response = client.post("/api/v1/simulate", json=body)
    assert response.status_code == 200, response.text
    return response.json()


def test_reviews_empty_queue(client):
    response = client.get("/api/v1/reviews")
    assert response.status_code == 200
    assert response.json() == []


def test_trust_initial_state(client):
    payload = client.get("/api/v1/trust").json()
    assert payload["level"] == "Recommend"
    assert payload["override_rate"] == 0.0
    assert payload["recent_transitions"] == []


def test_metrics_latest_404_before_any_run(client):
    response = client.get("/api/v1/metrics/latest")
    assert response.status_code == 404
    assert response.json()["code"] == "not_found"


def test_audit_verify_clean(client):
    payload = client.get("/api/v1/audit/verify").json()
    assert payload["ok"] is True
    assert payload["broken_seq"] is None


def test_simulate_populates_runs_metrics_and_inbox(client):
    payload = _simulate(client)
    assert payload["blocked_noncompliant"] == 15
    assert payload["reviews_enqueued"] > 0

    run = client.get(f"/api/v1/runs/{payload['run_id']}")
    assert run.status_code == 200
    assert run.json()["scenario"] == "compliance"

    metrics = client.get("/api/v1/metrics/latest").json()
    assert metrics["run_id"] == payload["run_id"]
    assert "lead_time_hours" in metrics["current"]

    reviews = client.get("/api/v1/reviews").json()
    pending = [r for r in reviews if r["status"] == "pending"]
    assert len(pending) == payload["reviews_enqueued"]
    # sorted by deadline ascending
    deadlines = [r["deadline"] for r in reviews]
    assert deadlines == sorted(deadlines)


def test_unknown_run_404(client):
    response = client.get("/api/v1/runs/ghost")
    assert response.status_code == 404


def test_simulate_bench_scenario_over_http(client):
    payload = _simulate(client, scenario="convergence-bench", seed=7)
    bench = payload["bench"]
    assert bench["variants"] == 20
    assert bench["converged_count"] >= 17
    stored = client.get(f"/api/v1/runs/{payload['run_id']}").json()
    assert stored["converged_count"] == bench["converged_count"]


def test_unknown_scenario_404(client):
    response = client.post("/api/v1/simulate", json={"scenario": "nope"})
    assert response.status_code == 404


def test_resolve_review_approve_and_conflict(client):
    _simulate(client)
    reviews = client.get("/api/v1/reviews").json()
    target = reviews[0]["decision"]["id"]

    before = client.get("/api/v1/audit/verify").json()["length"]
    ok = client.post(
        f"/api/v1/reviews/{target}/resolve",
        json={"resolution": "approve", "reviewer": "alice", "rationale": "checked the diff"},
    )
    assert ok.status_code == 200
    assert ok.json()["status"] == "approved"
    after = client.get("/api/v1/audit/verify").json()["length"]
    assert after == before + 1  # exactly one audit entry per resolution

    conflict = client.post(
        f"/api/v1/reviews/{target}/resolve",
        json={"resolution": "reject", "reviewer": "bob", "rationale": "too risky"},
    )
    assert conflict.status_code == 409
    assert conflict.json()["code"] == "conflict"
    assert conflict.json()["request_id"]

    trust = client.get("/api/v1/trust").json()
    assert trust["window"] == [["agreed", False]] or trust["intervention_accuracy"] == 1.0


def test_resolve_expired_review_returns_410(client):
    _simulate(client)
    reviews = client.get("/api/v1/reviews").json()
    target = reviews[0]["decision"]["id"]
    client.clock.advance(25 * 3600)
    response = client.post(
        f"/api/v1/reviews/{target}/resolve",
        json={"resolution": "approve", "reviewer": "alice", "rationale": "late"},
    )
    # listing first expires it, so resolving conflicts; resolving directly expires
    assert response.status_code in (409, 410)
    items = client.get("/api/v1/reviews").json()
    assert all(r["status"] == "expired_auto_rejected" for r in items if r["decision"]["id"] == target)


def test_invalid_resolution_400(client):
    _simulate(client)
    target = client.get("/api/v1/reviews").json()[0]["decision"]["id"]
    response = client.post(
        f"/api/v1/reviews/{target}/resolve",
        json={"resolution": "maybe", "reviewer": "alice", "rationale": "hmm"},
    )
    assert response.status_code == 400


def test_audit_verify_detects_tamper(client, tmp_path):
    _simulate(client)
    assert client.get("/api/v1/audit/verify").json()["ok"] is True

    log_path = client.data_dir / "audit.log"
    lines = log_path.read_text(encoding="utf-8").splitlines()
    raw = json.loads(lines[2])
    raw["rationale"] = "tampered"
    lines[2] = json.dumps(raw, separators=(",", ":"), ensure_ascii=False)
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # the live endpoint verifies the persisted file and pinpoints the break
    payload = client.get("/api/v1/audit/verify").json()
    assert payload["ok"] is False
    assert payload["broken_seq"] == 2

    # restart refuses the broken recovery source outright
    from veriflow.errors import DomainError
    from veriflow.service import ServiceState

    with pytest.raises(DomainError, match="broken"):
        ServiceState(client.data_dir, clock=client.clock)


def test_state_survives_restart(tmp_path):
    clock = VirtualClock(EPOCH)
    data_dir = tmp_path / "data"
    with TestClient(create_app(data_dir, clock=clock)) as client:
        client.post("/api/v1/simulate", json={"scenario": "compliance"})
        first = client.get("/api/v1/reviews").json()
        target = first[0]["decision"]["id"]
        client.post(
            f"/api/v1/reviews/{target}/resolve",
            json={"resolution": "reject", "reviewer": "bob", "rationale": "nope"},
        )
    with TestClient(create_app(data_dir, clock=clock)) as reborn:
        items = reborn.get("/api/v1/reviews").json()
        by_id = {r["decision"]["id"]: r for r in items}
        assert by_id[target]["status"] == "rejected"
        assert reborn.get("/api/v1/audit/verify").json()["ok"] is True
        trust = reborn.get("/api/v1/trust").json()
        assert trust["override_rate"] > 0.0
