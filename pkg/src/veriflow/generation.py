"""Test-case synthesis from requirements against a declarative SUT model.

Generation is grammar/template based: a requirement's action keyword is
matched to an endpoint (exact keyword first, then a synonym table). Each
matched requirement yields one nominal case plus a {v-1, v, v+1} boundary
triple (or {v(1-eps), v, v(1+eps)} for continuous domains, eps = 0.01) for
every ge/gt/le/lt numeric condition whose subject names a numeric parameter.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import DomainError, ParseError
from .ingest import Condition, RequirementRecord

log = logging.getLogger(__name__)

CONTINUOUS_EPSILON = 0.01
BOUNDARY_COMPARATORS = frozenset({"ge", "gt", "le", "lt"})

# requirement action -> canonical endpoint keyword
ACTION_SYNONYMS = {
    "send": "transfer",
    "move": "transfer",
    "wire": "transfer",
    "remit": "transfer",
    "take": "withdraw",
    "draw": "withdraw",
    "produce": "generate",
    "create": "generate",
    "prepare": "generate",
    "compile": "generate",
    "check": "screen",
    "scan": "screen",
    "vet": "screen",
    "inspect": "screen",
}


@dataclass(frozen=True)
class NumericDomain:
    min: float
    max: float
    integer: bool

    def contains(self, value) -> bool:
        return self.min <= value <= self.max

    def midpoint(self):
        if self.integer:
            return int((self.min + self.max) // 2)
        return (self.min + self.max) / 2


@dataclass(frozen=True)
class EnumDomain:
    values: tuple

    def contains(self, value) -> bool:
        return value in self.values


@dataclass(frozen=True)
class Parameter:
    name: str
    domain: NumericDomain | EnumDomain


@dataclass(frozen=True)
class Endpoint:
    id: str
    action_keyword: str
    parameters: tuple[Parameter, ...]
    units: frozenset[str]
    precondition: Condition | None = None

    def parameter(self, name: str) -> Parameter | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None


@dataclass
class SutModel:
    name: str
    endpoints: list[Endpoint]
    coverage_units: tuple[str, ...]
    version: int = 1

    def endpoint(self, endpoint_id: str) -> Endpoint:
        for e in self.endpoints:
            if e.id == endpoint_id:
                return e
        raise DomainError(f"unknown endpoint {endpoint_id!r}")


@dataclass
class TestStep:
    endpoint_id: str
    arguments: dict
    out_of_domain: bool = False

    def to_dict(self) -> dict:
        return {
            "endpoint_id": self.endpoint_id,
            "arguments": dict(sorted(self.arguments.items())),
            "out_of_domain": self.out_of_domain,
        }


@dataclass
class ExpectedOutcome:
    kind: str  # "nominal" | "boundary"
    assertions: list[str]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "assertions": list(self.assertions)}


@dataclass
class TestCase:
    id: str
    requirement_refs: list[str]
    steps: list[TestStep]
    expected: ExpectedOutcome
    covered_units: frozenset[str]
    cost: float
    suite_version: tuple[int, int, int] = (1, 0, 0)

    def __post_init__(self):
        if not self.steps:
            raise DomainError(f"case {self.id}: steps must be non-empty")
        if self.cost <= 0:
            raise DomainError(f"case {self.id}: cost must be positive")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "requirement_refs": list(self.requirement_refs),
            "steps": [s.to_dict() for s in self.steps],
            "expected": self.expected.to_dict(),
            "covered_units": sorted(self.covered_units),
            "cost": self.cost,
            "suite_version": list(self.suite_version),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TestCase":
        return cls(
            id=raw["id"],
            requirement_refs=list(raw["requirement_refs"]),
            steps=[
                TestStep(
                    endpoint_id=s["endpoint_id"],
                    arguments=dict(s["arguments"]),
                    out_of_domain=s.get("out_of_domain", False),
                )
                for s in raw["steps"]
            ],
            expected=ExpectedOutcome(
                kind=raw["expected"]["kind"], assertions=list(raw["expected"]["assertions"])
            ),
            covered_units=frozenset(raw["covered_units"]),
            cost=raw["cost"],
            suite_version=tuple(raw["suite_version"]),
        )


@dataclass(frozen=True)
class CoverageReport:
    covered: frozenset[str]
    total: int
    fraction: float

    def to_dict(self) -> dict:
        return {
            "covered": sorted(self.covered),
            "total": self.total,
            "fraction": round(self.fraction, 4),
        }


def _parse_domain(raw: dict, where: str) -> NumericDomain | EnumDomain:
    if "values" in raw:
        values = tuple(raw["values"])
        if not values:
            raise ParseError(f"{where}: enum domain must list values")
        return EnumDomain(values=values)
    if "min" in raw and "max" in raw:
        lo, hi = raw["min"], raw["max"]
        if lo > hi:
            raise ParseError(f"{where}: numeric domain needs min <= max")
        integer = isinstance(lo, int) and isinstance(hi, int)
        return NumericDomain(min=lo, max=hi, integer=integer)
    raise ParseError(f"{where}: domain must be {{min,max}} or {{values}}")


def load_sut_model(doc: str | dict) -> SutModel:
    """Validate and load a SUT model from its JSON document."""
    raw = json.loads(doc) if isinstance(doc, str) else doc
    units = list(raw.get("coverage_units", []))
    if not units:
        raise ParseError("SUT model needs a non-empty coverage_units list")
    if len(set(units)) != len(units):
        dupes = sorted({u for u in units if units.count(u) > 1})
        raise ParseError(f"duplicate coverage units: {dupes}")
    unit_set = set(units)
    endpoints: list[Endpoint] = []
    seen_endpoint_ids: set[str] = set()
    for ep in raw.get("endpoints", []):
        ep_id = ep["id"]
        if ep_id in seen_endpoint_ids:
            raise ParseError(f"duplicate endpoint id {ep_id!r}")
        seen_endpoint_ids.add(ep_id)
        ep_units = set(ep.get("units", []))
        unknown = ep_units - unit_set
        if unknown:
            raise ParseError(f"endpoint {ep_id!r} references unknown units: {sorted(unknown)}")
        parameters = tuple(
            Parameter(name=p["name"], domain=_parse_domain(p["domain"], f"endpoint {ep_id!r}"))
            for p in ep.get("parameters", [])
        )
        precondition = None
        if ep.get("precondition"):
            precondition = Condition.from_dict(ep["precondition"])
        endpoints.append(
            Endpoint(
                id=ep_id,
                action_keyword=ep["action_keyword"],
                parameters=parameters,
                units=frozenset(ep_units),
                precondition=precondition,
            )
        )
    return SutModel(
        name=raw.get("name", "unnamed"),
        endpoints=endpoints,
        coverage_units=tuple(units),
        version=int(raw.get("version", 1)),
    )


def _match_endpoint(action: str, sut: SutModel) -> Endpoint | None:
    for ep in sut.endpoints:
        if ep.action_keyword == action:
            return ep
    canonical = ACTION_SYNONYMS.get(action)
    if canonical is not None:
        for ep in sut.endpoints:
            if ep.action_keyword == canonical:
                return ep
    return None


def _satisfying_value(cond: Condition, domain: NumericDomain):
    v = cond.value
    if cond.comparator in ("ge", "le", "eq"):
        chosen = v
    elif cond.comparator == "gt":
        chosen = v + 1 if domain.integer else v * (1 + CONTINUOUS_EPSILON) if v else CONTINUOUS_EPSILON
    elif cond.comparator == "lt":
        chosen = v - 1 if domain.integer else v * (1 - CONTINUOUS_EPSILON) if v else -CONTINUOUS_EPSILON
    else:  # ne
        chosen = domain.midpoint()
        if chosen == v:
            chosen = chosen + 1 if domain.integer else chosen * (1 + CONTINUOUS_EPSILON)
    clamped = min(max(chosen, domain.min), domain.max)
    return int(clamped) if domain.integer else clamped


def _default_arguments(endpoint: Endpoint) -> dict:
    args = {}
    for p in endpoint.parameters:
        if isinstance(p.domain, NumericDomain):
            args[p.name] = p.domain.midpoint()
        else:
            args[p.name] = p.domain.values[0]
    return args


def _apply_precondition(endpoint: Endpoint, args: dict) -> None:
    pre = endpoint.precondition
    if pre is None:
        return
    param = endpoint.parameter(pre.subject)
    if param is None or not isinstance(param.domain, NumericDomain):
        return
    args[pre.subject] = _satisfying_value(pre, param.domain)


def _boundary_probes(value, domain: NumericDomain) -> list:
    if domain.integer:
        return [value - 1, value, value + 1]
    eps = CONTINUOUS_EPSILON
    if value == 0:
        return [-eps, 0, eps]
    return [value * (1 - eps), value, value * (1 + eps)]


def generate_cases(
    reqs: list[RequirementRecord], sut: SutModel, seed: int = 0
) -> list[TestCase]:
    """Generate the nominal + boundary case pool for a requirement corpus.

    Output is deterministic for a given (reqs, sut, seed); the seed is part
    of the contract for future stochastic argument strategies, the current
    rule set is fully deterministic.
    """
    del seed
    cases: list[TestCase] = []
    skipped_unparsed = 0
    unmatched = 0
    for req in reqs:
        if req.unparsed:
            skipped_unparsed += 1
            continue
        if req.action is None:
            unmatched += 1
            continue
        endpoint = _match_endpoint(req.action, sut)
        if endpoint is None:
            unmatched += 1
            continue

        nominal_args = _default_arguments(endpoint)
        _apply_precondition(endpoint, nominal_args)
        for cond in req.conditions:
            param = endpoint.parameter(cond.subject)
            if param is None or not isinstance(param.domain, NumericDomain):
                continue
            if cond.comparator in BOUNDARY_COMPARATORS or cond.comparator == "eq":
                nominal_args[cond.subject] = _satisfying_value(cond, param.domain)

        assertions = ["response status matches expected outcome", "response schema is valid"]
        assertions += [
            f"postcondition holds: {c.subject} {c.comparator} {c.value}" for c in req.conditions
        ]
        if req.expected_outcome:
            assertions.append(f"outcome observed: {req.expected_outcome}")
        step = TestStep(endpoint_id=endpoint.id, arguments=dict(nominal_args))
        cases.append(
            TestCase(
                id=f"{req.id}-{endpoint.id}-nominal",
                requirement_refs=[req.id],
                steps=[step],
                expected=ExpectedOutcome(kind="nominal", assertions=assertions),
                covered_units=endpoint.units,
                cost=1 + 1,
            )
        )

        for cond in req.conditions:
            if cond.comparator not in BOUNDARY_COMPARATORS:
                continue
            param = endpoint.parameter(cond.subject)
            if param is None or not isinstance(param.domain, NumericDomain):
                continue
            probes = _boundary_probes(cond.value, param.domain)
            for label, probe in zip(("lo", "at", "hi"), probes):
                args = _default_arguments(endpoint)
                _apply_precondition(endpoint, args)
                args[cond.subject] = probe
                out_of_domain = not param.domain.contains(probe)
                cases.append(
                    TestCase(
                        id=f"{req.id}-{endpoint.id}-{cond.subject}-{label}",
                        requirement_refs=[req.id],
                        steps=[
                            TestStep(
                                endpoint_id=endpoint.id,
                                arguments=args,
                                out_of_domain=out_of_domain,
                            )
                        ],
                        expected=ExpectedOutcome(
                            kind="boundary",
                            assertions=[
                                f"boundary behavior at {cond.subject}={probe} is correct"
                            ],
                        ),
                        covered_units=endpoint.units,
                        cost=1 + 1,
                    )
                )
    if skipped_unparsed:
        log.warning("generation skipped %d unparsed requirement(s)", skipped_unparsed)
    if not cases and reqs:
        log.warning("no endpoint matched any requirement (%d unmatched)", unmatched)
    return cases


def coverage(suite: list[TestCase], sut: SutModel) -> CoverageReport:
    """Set-union coverage of the suite over the SUT's coverage units."""
    known = set(sut.coverage_units)
    covered: set[str] = set()
    for case in suite:
        for step in case.steps:
            sut.endpoint(step.endpoint_id)  # raises on unknown endpoints
        outside = case.covered_units - known
        if outside:
            raise DomainError(f"case {case.id} covers unknown units: {sorted(outside)}")
        covered |= case.covered_units
    total = len(sut.coverage_units)
    return CoverageReport(covered=frozenset(covered), total=total, fraction=len(covered) / total)


def bump_suite_version(
    prev: tuple[int, int, int], change: str
) -> tuple[int, int, int]:
    major, minor, patch = prev
    if change == "regenerated":
        return (major + 1, 0, 0)
    if change == "optimized":
        return (major, minor + 1, 0)
    if change == "patched":
        return (major, minor, patch + 1)
    raise DomainError(f"unknown change kind {change!r}")


def suite_to_json(suite: list[TestCase]) -> str:
    return json.dumps([c.to_dict() for c in suite], indent=2, ensure_ascii=False)


def suite_from_json(text: str) -> list[TestCase]:
    return [TestCase.from_dict(raw) for raw in json.loads(text)]
