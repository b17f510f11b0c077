"""HTTP service over the review queue, trust state, metrics, audit, and simulator.

All state mutations funnel through one lock (the linearization point shared
with the CLI via the same on-disk files). The audit log file is the recovery
source of truth: startup verifies the full chain and refuses a broken one.

After a simulated run, the decisions that escalated during the simulation
are mirrored into the live review inbox (fresh pending copies, ids
namespaced by run) so reviewers can work the human-in-the-loop surface; live
resolutions feed the service's own trust state and audit chain.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .audit_log import FileBackedAuditChain
from .clock import RealClock
from .errors import ConflictError, DomainError, NotFoundError
from .policy_trust import DecisionGovernor, DecisionRecord, load_policy_pack
from .resources import data_text
from .simulator import run_scenario

REVIEW_INBOX_LIMIT = 25

_STATUS_BY_CODE = {"not_found": 404, "conflict": 409, "invalid": 400, "expired": 410}


class ServiceState:
    def __init__(self, data_dir: Path, clock=None, policy_pack: str | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "runs").mkdir(exist_ok=True)
        self.clock = clock or RealClock()
        self.lock = threading.Lock()
        pack_text = (
            Path(policy_pack).read_text(encoding="utf-8")
            if policy_pack
            else data_text("policy_default.json")
        )
        chain = FileBackedAuditChain(self.data_dir / "audit.log")
        self.governor = DecisionGovernor(load_policy_pack(pack_text), chain, self.clock)
        snapshot_path = self.data_dir / "governor.json"
        if snapshot_path.exists():
            self.governor.load_snapshot(json.loads(snapshot_path.read_text(encoding="utf-8")))

    def persist(self) -> None:
        (self.data_dir / "governor.json").write_text(
            json.dumps(self.governor.to_snapshot(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def latest_path(self) -> Path:
        return self.data_dir / "latest_comparison.json"

    def run_summary(self, run_id: str) -> dict:
        path = self.data_dir / "runs" / run_id / "summary.json"
        if not path.exists():
            raise NotFoundError(f"no run named {run_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))


def _mirror_escalations_to_inbox(state: ServiceState, ai_summary_decisions: list[dict], run_id: str):
    """Copy the run's escalated decisions into the live queue as pending items."""
    mirrored = 0
    for entry in ai_summary_decisions:
        if mirrored >= REVIEW_INBOX_LIMIT:
            break
        if entry.get("policy_passed", True) and entry["decision"]["severity"] != "high_risk":
            continue
        raw = dict(entry["decision"])
        raw["id"] = f"{run_id}:{raw['id']}"
        raw["rationale"] = f"[{run_id}] {raw['rationale']}"
        try:
            state.governor.enqueue_review(DecisionRecord.from_dict(raw))
            mirrored += 1
        except ConflictError:
            continue
    return mirrored


def create_app(
    data_dir: Path, clock=None, policy_pack: str | None = None
) -> FastAPI:
    state = ServiceState(data_dir, clock=clock, policy_pack=policy_pack)
    app = FastAPI(title="veriflow", version="0.1.0")
    app.state.service = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(DomainError)
    async def domain_error_handler(_request: Request, exc: DomainError):
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(exc.code, 400),
            content={
                "code": exc.code,
                "message": str(exc),
                "request_id": uuid.uuid4().hex[:12],
            },
        )

    @app.get("/api/v1/reviews")
    def list_reviews():
        with state.lock:
            state.governor.expire_reviews()
            state.persist()
            items = [item.to_dict() for item in state.governor.queue.values()]
        items.sort(key=lambda i: i["deadline"])
        return items

    @app.post("/api/v1/reviews/{decision_id:path}/resolve")
    def resolve_review(decision_id: str, body: dict):
        resolution = body.get("resolution")
        reviewer = body.get("reviewer") or "anonymous"
        rationale = body.get("rationale") or ""
        with state.lock:
            item = state.governor.resolve_review(decision_id, resolution, reviewer, rationale)
            state.persist()
            return item.to_dict()

    @app.get("/api/v1/trust")
    def trust():
        with state.lock:
            payload = state.governor.trust.to_dict()
            payload["recent_transitions"] = [
                t.to_dict() for t in state.governor.transitions[-10:]
            ]
            return payload

    @app.get("/api/v1/metrics/latest")
    def metrics_latest():
        path = state.latest_path()
        if not path.exists():
            raise NotFoundError("no simulation has produced metrics yet")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/api/v1/audit/verify")
    def audit_verify():
        # Verify the persisted log, not the in-memory copy: the file is the
        # recovery source of truth and the thing a tamperer would touch.
        with state.lock:
            log_path = state.data_dir / "audit.log"
            if log_path.exists():
                from .audit_log import AuditChain

                chain = AuditChain.from_lines(log_path.read_text(encoding="utf-8"))
            else:
                chain = state.governor.chain
            broken = chain.verify()
            return {
                "ok": broken is None,
                "broken_seq": broken,
                "length": len(chain),
                "head_digest": chain.head_digest,
            }

    @app.post("/api/v1/simulate")
    def simulate(body: dict):
        scenario = body.get("scenario")
        if not scenario:
            raise DomainError("simulate requires a scenario name")
        seed = body.get("seed")
        result = run_scenario(scenario, seed)
        runs_dir = state.data_dir / "runs"
        if "bench" in result:
            bench = result["bench"]
            run_id = f"{scenario}-bench-seed{bench['seed']}"
            out = runs_dir / run_id
            out.mkdir(parents=True, exist_ok=True)
            (out / "summary.json").write_text(
                json.dumps(bench, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            return {"run_id": run_id, "bench": bench}
        manual, ai, comparison = result["manual"], result["ai"], result["comparison"]
        manual.to_dir(runs_dir)
        ai.to_dir(runs_dir)
        payload = {
            "run_id": ai.run_id,
            "scenario": scenario,
            "seed": ai.seed,
            "baseline": manual.snapshot.to_dict(),
            "current": ai.snapshot.to_dict(),
            "comparison": comparison.to_dict(),
            "detections": {"baseline": len(manual.detections), "treated": len(ai.detections)},
            "blocked_noncompliant": ai.blocked_noncompliant,
        }
        state.latest_path().write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        with state.lock:
            mirrored = _mirror_escalations_to_inbox(state, ai.decisions, ai.run_id)
            state.persist()
        payload["reviews_enqueued"] = mirrored
        return payload

    @app.get("/api/v1/runs/{run_id}")
    def get_run(run_id: str):
        return state.run_summary(run_id)

    return app


def serve(port: int, data_dir: Path, policy_pack: str | None = None, virtual_clock: bool = False):
    import uvicorn

    from .clock import VirtualClock

    clock = VirtualClock() if virtual_clock else RealClock()
    app = create_app(data_dir, clock=clock, policy_pack=policy_pack)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
