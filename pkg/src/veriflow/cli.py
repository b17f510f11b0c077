"""Command-line interface.

Every subcommand writes JSON to stdout and a one-line human summary to
stderr, exiting 0 on success, 1 on a domain error, and 2 on usage errors
(argparse's convention).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import DomainError
from .jsonutil import canonical_json


def _emit(payload, summary: str) -> int:
    sys.stdout.write(canonical_json(payload) + "\n")
    sys.stderr.write(summary + "\n")
    return 0


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _default_data_dir() -> str:
    return os.environ.get("VERIFLOW_DATA_DIR", str(Path.cwd() / "veriflow-data"))


def _cmd_ingest(args) -> int:
    from .ingest import AugmentationConfig, augment, parse_defect_log, parse_requirements

    records = parse_requirements(_read(args.requirements))
    if args.variants:
        cfg = AugmentationConfig(
            noise_rate=args.noise_rate,
            permutation_enabled=args.permute,
            variants_per_record=args.variants,
            seed=args.seed,
        )
        records = augment(records, cfg)
    payload = {"requirements": [r.to_dict() for r in records]}
    summary = f"parsed {len(records)} requirement record(s)"
    if args.defects:
        defects = parse_defect_log(_read(args.defects))
        payload["defects"] = [d.to_dict() for d in defects]
        summary += f", {len(defects)} defect record(s)"
    return _emit(payload, summary)


def _cmd_generate(args) -> int:
    from .generation import coverage, generate_cases, load_sut_model
    from .ingest import parse_requirements

    sut = load_sut_model(_read(args.sut))
    reqs = parse_requirements(_read(args.requirements))
    cases = generate_cases(reqs, sut, args.seed)
    report = coverage(cases, sut)
    payload = {"cases": [c.to_dict() for c in cases], "pool_coverage": report.to_dict()}
    return _emit(payload, f"generated {len(cases)} case(s), pool coverage {report.fraction:.4f}")


def _cmd_optimize(args) -> int:
    from .generation import TestCase, load_sut_model
    from .optimizer import OptimizerConfig, optimize_suite, reward
    from .simulator import FaultySut, InjectedDefect, make_detection_estimator

    sut = load_sut_model(_read(args.sut))
    pool = [TestCase.from_dict(raw) for raw in json.loads(_read(args.pool))]
    if args.training_defects:
        defects = tuple(InjectedDefect(**d) for d in json.loads(_read(args.training_defects)))
        estimator = make_detection_estimator(FaultySut(model=sut, defects=defects))
    else:
        estimator = lambda suite: 0.0  # noqa: E731 - no detection signal provided
    cfg = OptimizerConfig(
        budget=args.budget,
        iterations=args.iterations,
        seed=args.seed,
        rollout_policy=args.rollout,
    )
    suite, root = optimize_suite(pool, sut, cfg, estimator)
    best = reward(suite, sut, estimator(suite), cfg)
    payload = {
        "suite_ids": [c.id for c in suite],
        "reward": best,
        "total_cost": sum(c.cost for c in suite),
        "search": {"iterations": root.visits, "children": len(root.children)},
    }
    return _emit(payload, f"selected {len(suite)} case(s), reward {best:.4f}")


def _cmd_validate(args) -> int:
    from .resources import data_text
    from .validation import (
        ExecutionRecord,
        LinearModel,
        ensemble_verdict,
        load_rule_pack,
        predict,
        rule_score,
        train_model,
    )

    if args.train:
        raw = [json.loads(line) for line in _read(args.train).splitlines() if line.strip()]
        dataset = [(ExecutionRecord.from_dict(r["record"]), bool(r["label"])) for r in raw]
        model, report = train_model(dataset, args.lambda_grid, seed=args.seed)
        if args.out:
            Path(args.out).write_text(
                json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8"
            )
        return _emit(
            {"model": model.to_dict(), "report": report.to_dict()},
            f"trained model (lambda {report.chosen_lambda}, "
            f"test precision {report.test_precision:.3f})",
        )

    if not args.executions:
        raise DomainError("validate needs --executions (or --train for training mode)")
    rules_text = _read(args.rules) if args.rules else data_text("rules_default.json")
    rules = load_rule_pack(rules_text)
    records = [
        ExecutionRecord.from_dict(json.loads(line))
        for line in _read(args.executions).splitlines()
        if line.strip()
    ]
    model = LinearModel.from_dict(json.loads(_read(args.model))) if args.model else None
    verdicts = []
    for rec in records:
        rs = rule_score(rules, rec)
        if model is not None:
            ms, weights = predict(model, rec), (0.4, 0.6)
        else:
            ms, weights = 0.0, (1.0, 0.0)  # rules-only mode
        verdicts.append(
            ensemble_verdict(rec.case_id, rs, ms, weights=weights, threshold=args.threshold).to_dict()
        )
    flagged = sum(1 for v in verdicts if v["verdict"] == "true_defect")
    return _emit(
        {"verdicts": verdicts},
        f"classified {len(verdicts)} record(s), {flagged} true defect(s)",
    )


def _cmd_simulate(args) -> int:
    from .simulator import run_scenario

    result = run_scenario(args.scenario, args.seed)
    out_dir = Path(args.out) if args.out else None
    if "bench" in result:
        payload = result["bench"]
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"{args.scenario}-bench.json").write_text(
                canonical_json(payload) + "\n", encoding="utf-8"
            )
        return _emit(
            payload,
            f"bench: {payload['converged_count']}/{payload['variants']} variants converged",
        )
    manual, ai, comparison = result["manual"], result["ai"], result["comparison"]
    if out_dir:
        manual.to_dir(out_dir)
        ai.to_dir(out_dir)
    payload = {
        "manual": manual.summary_dict(),
        "ai": ai.summary_dict(),
        "comparison": comparison.to_dict(),
    }
    return _emit(
        payload,
        f"simulated {args.scenario}: ai detected {len(ai.detections)}, "
        f"manual {len(manual.detections)}, blocked {ai.blocked_noncompliant}",
    )


def _cmd_compare(args) -> int:
    from .metrics import ab_test, percent_change

    baseline = json.loads(_read(Path(args.baseline) / "summary.json"))
    treated = json.loads(_read(Path(args.treated) / "summary.json"))
    if baseline["scenario"] != treated["scenario"]:
        raise DomainError("runs come from different scenarios")

    def leads(run_dir):
        from .clock import parse_rfc3339

        samples = []
        for line in _read(Path(run_dir) / "changes.jsonl").splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            if raw["deployed_at"]:
                delta = parse_rfc3339(raw["deployed_at"]) - parse_rfc3339(raw["committed_at"])
                samples.append(delta.total_seconds() / 3600.0)
        return samples

    per_metric = {}
    for key in (
        "deploys_per_week",
        "change_failure_rate",
        "mttr_hours",
        "coverage",
        "detection_rate",
        "override_rate",
    ):
        b, t = baseline["snapshot"][key], treated["snapshot"][key]
        per_metric[key] = {"baseline": b, "treated": t, "percent_change": percent_change(b, t)}
    lb = baseline["snapshot"]["lead_time_hours"]["mean"]
    lt = treated["snapshot"]["lead_time_hours"]["mean"]
    per_metric["lead_time_mean_hours"] = {
        "baseline": lb,
        "treated": lt,
        "percent_change": percent_change(lb, lt),
    }
    ab = ab_test(leads(args.baseline), leads(args.treated), seed=baseline["seed"])
    payload = {"per_metric": per_metric, "ab": ab.to_dict()}
    return _emit(payload, f"compared {baseline['run_id']} vs {treated['run_id']}")


def _cmd_metrics_report(args) -> int:
    from .clock import parse_rfc3339
    from .metrics import ChangeRecord, DeployEvent, IncidentEvent, build_snapshot

    def lines(path):
        return [json.loads(x) for x in _read(path).splitlines() if x.strip()]

    changes = [
        ChangeRecord(
            id=r["id"],
            committed_at=parse_rfc3339(r["committed_at"]),
            deployed_at=parse_rfc3339(r["deployed_at"]) if r.get("deployed_at") else None,
        )
        for r in lines(args.changes)
    ]
    deploys = [
        DeployEvent(id=r["id"], at=parse_rfc3339(r["at"]), outcome=r["outcome"])
        for r in lines(args.deploys)
    ]
    incidents = [
        IncidentEvent(
            id=r["id"],
            opened_at=parse_rfc3339(r["opened_at"]),
            resolved_at=parse_rfc3339(r["resolved_at"]) if r.get("resolved_at") else None,
        )
        for r in lines(args.incidents)
    ]
    window = (
        min(d.at for d in deploys),
        max(d.at for d in deploys),
    )
    snapshot = build_snapshot(
        changes,
        deploys,
        incidents,
        window,
        coverage=args.coverage,
        detection=args.detection,
        override_rate=args.override_rate,
    )
    return _emit(snapshot.to_dict(), "metrics snapshot computed")


def _cmd_audit_verify(args) -> int:
    from .audit_log import AuditChain

    chain = AuditChain.from_lines(_read(args.log))
    broken = chain.verify()
    payload = {"ok": broken is None, "broken_seq": broken, "length": len(chain)}
    if broken is None:
        return _emit(payload, f"audit chain ok ({len(chain)} entries)")
    sys.stdout.write(canonical_json(payload) + "\n")
    sys.stderr.write(f"audit chain broken at seq {broken}\n")
    return 1


def _governor(data_dir: str):
    from .audit_log import FileBackedAuditChain
    from .clock import RealClock
    from .policy_trust import DecisionGovernor, load_policy_pack
    from .resources import data_text

    root = Path(data_dir)
    root.mkdir(parents=True, exist_ok=True)
    chain = FileBackedAuditChain(root / "audit.log")
    governor = DecisionGovernor(load_policy_pack(data_text("policy_default.json")), chain, RealClock())
    snapshot = root / "governor.json"
    if snapshot.exists():
        governor.load_snapshot(json.loads(snapshot.read_text(encoding="utf-8")))
    return governor, snapshot


def _persist_governor(governor, snapshot_path: Path) -> None:
    snapshot_path.write_text(
        json.dumps(governor.to_snapshot(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _cmd_reviews_list(args) -> int:
    governor, snapshot = _governor(args.data_dir)
    governor.expire_reviews()
    _persist_governor(governor, snapshot)
    items = sorted(
        (item.to_dict() for item in governor.queue.values()), key=lambda i: i["deadline"]
    )
    pending = sum(1 for i in items if i["status"] == "pending")
    return _emit(items, f"{len(items)} review item(s), {pending} pending")


def _cmd_reviews_resolve(args) -> int:
    governor, snapshot = _governor(args.data_dir)
    resolution = "approve" if args.approve else "reject"
    # No expiry sweep here: resolving a lapsed item must surface the expired
    # error itself ("run expire_reviews"), which `reviews list` performs.
    item = governor.resolve_review(args.id, resolution, args.reviewer, args.rationale)
    _persist_governor(governor, snapshot)
    return _emit(item.to_dict(), f"review {args.id} -> {item.status}")


def _cmd_serve(args) -> int:
    from .service import serve

    serve(
        port=args.port,
        data_dir=Path(args.data_dir),
        policy_pack=args.policy_pack,
        virtual_clock=args.virtual_clock,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veriflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse requirements and defect logs")
    p.add_argument("--requirements", required=True)
    p.add_argument("--defects")
    p.add_argument("--variants", type=int, default=0)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--permute", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("generate", help="generate test cases from requirements")
    p.add_argument("--requirements", required=True)
    p.add_argument("--sut", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("optimize", help="select a suite under budget with MCTS")
    p.add_argument("--pool", required=True, help="JSON list of serialized test cases")
    p.add_argument("--sut", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rollout", choices=("random", "greedy"), default="random")
    p.add_argument("--training-defects", help="JSON list of defects for the detection estimator")
    p.set_defaults(handler=_cmd_optimize)

    p = sub.add_parser("validate", help="classify execution records or train the model")
    p.add_argument("--executions", help="JSONL of execution records")
    p.add_argument("--rules")
    p.add_argument("--model")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--train", help="JSONL of {record, label} training pairs")
    p.add_argument("--lambda-grid", type=float, nargs="+", default=[0.001, 0.01, 0.1])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("simulate", help="run a scenario end to end")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory to write run artifacts into")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("compare", help="compare two persisted runs")
    p.add_argument("--baseline", required=True)
    p.add_argument("--treated", required=True)
    p.set_defaults(handler=_cmd_compare)

    p_metrics = sub.add_parser("metrics", help="metrics commands")
    metrics_sub = p_metrics.add_subparsers(dest="metrics_command", required=True)
    p = metrics_sub.add_parser("report", help="snapshot from event streams")
    p.add_argument("--changes", required=True)
    p.add_argument("--deploys", required=True)
    p.add_argument("--incidents", required=True)
    p.add_argument("--coverage", type=float, default=0.0)
    p.add_argument("--detection", type=float, default=0.0)
    p.add_argument("--override-rate", type=float, default=0.0)
    p.set_defaults(handler=_cmd_metrics_report)

    p_audit = sub.add_parser("audit", help="audit log commands")
    audit_sub = p_audit.add_subparsers(dest="audit_command", required=True)
    p = audit_sub.add_parser("verify", help="verify a hash-chained audit log")
    p.add_argument("--log", required=True)
    p.set_defaults(handler=_cmd_audit_verify)

    p_reviews = sub.add_parser("reviews", help="review queue commands")
    reviews_sub = p_reviews.add_subparsers(dest="reviews_command", required=True)
    p = reviews_sub.add_parser("list")
    p.add_argument("--data-dir", default=_default_data_dir())
    p.set_defaults(handler=_cmd_reviews_list)
    p = reviews_sub.add_parser("resolve")
    p.add_argument("--data-dir", default=_default_data_dir())
    p.add_argument("--id", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--approve", action="store_true")
    group.add_argument("--reject", action="store_true")
    p.add_argument("--reviewer", default="cli-user")
    p.add_argument("--rationale", required=True)
    p.set_defaults(handler=_cmd_reviews_resolve)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=int(os.environ.get("VERIFLOW_PORT", "8787")))
    p.add_argument("--data-dir", default=_default_data_dir())
    p.add_argument("--policy-pack")
    p.add_argument("--virtual-clock", action="store_true")
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DomainError as exc:
        sys.stdout.write(canonical_json({"error": {"code": exc.code, "message": str(exc)}}) + "\n")
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stdout.write(canonical_json({"error": {"code": "invalid", "message": str(exc)}}) + "\n")
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
