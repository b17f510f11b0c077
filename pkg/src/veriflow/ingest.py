"""Requirement and defect-log parsing, plus seeded augmentation.

The requirement grammar is a fixed rule set, documented here because it
defines what the extraction scorer can measure:

* one requirement statement per non-empty line, optional leading ``[ID]`` tag;
  untagged lines get the id ``L<line-number>``;
* a modal verb (``shall`` / ``must`` / ``should``) splits actor from action:
  actor = words before the modal (articles stripped), action = first word
  after the modal;
* the object is the phrase after the action up to the first preposition
  (to/into/from/for/with/at/on/in/by) or condition marker;
* a condition clause starts at when/if/while/unless/where/given/provided and
  splits on ``and``; comparators come from a lexicon (symbols plus phrases
  like "at least" -> ge, "more than" -> gt, "equals" -> eq, ...);
* ``so that ...`` introduces the expected outcome;
* priority maps from the modal: must -> high, shall -> medium, should -> low;
* lines with no modal are flagged ``unparsed`` and kept.

Augmentation produces seeded variants: permutation variants rotate the
condition list, noise variants perturb numeric condition values by
+/- (noise_rate * |value|) rounded to the precision of the source literal.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace

from .errors import ConfigError, DomainError, ParseError

NUMERIC_COMPARATORS = frozenset({"lt", "le", "gt", "ge"})
COMPARATORS = frozenset({"eq", "ne", "lt", "le", "gt", "ge", "present", "absent"})
PRIORITIES = ("low", "medium", "high")
SEVERITIES = ("minor", "major", "critical")

Scalar = float | int | str | bool


@dataclass(frozen=True)
class Condition:
    subject: str
    comparator: str
    value: Scalar | None = None

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise DomainError(f"unknown comparator {self.comparator!r}")
        if self.comparator in NUMERIC_COMPARATORS and not _is_number(self.value):
            raise DomainError(
                f"comparator {self.comparator!r} requires a numeric value, got {self.value!r}"
            )

    def to_dict(self) -> dict:
        return {"subject": self.subject, "comparator": self.comparator, "value": self.value}

    @classmethod
    def from_dict(cls, raw: dict) -> "Condition":
        return cls(subject=raw["subject"], comparator=raw["comparator"], value=raw.get("value"))


@dataclass
class RequirementRecord:
    id: str
    raw_text: str
    actor: str | None = None
    action: str | None = None
    object: str | None = None
    conditions: list[Condition] = field(default_factory=list)
    expected_outcome: str | None = None
    priority: str = "medium"
    lineage: str | None = None
    unparsed: bool = False

    def __post_init__(self):
        if self.priority not in PRIORITIES:
            raise DomainError(f"unknown priority {self.priority!r}")
        if not self.unparsed and self.action is None and self.object is None:
            raise DomainError(f"record {self.id}: parsed records need an action or object")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "raw_text": self.raw_text,
            "actor": self.actor,
            "action": self.action,
            "object": self.object,
            "conditions": [c.to_dict() for c in self.conditions],
            "expected_outcome": self.expected_outcome,
            "priority": self.priority,
            "lineage": self.lineage,
            "unparsed": self.unparsed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RequirementRecord":
        return cls(
            id=raw["id"],
            raw_text=raw["raw_text"],
            actor=raw.get("actor"),
            action=raw.get("action"),
            object=raw.get("object"),
            conditions=[Condition.from_dict(c) for c in raw.get("conditions", [])],
            expected_outcome=raw.get("expected_outcome"),
            priority=raw.get("priority", "medium"),
            lineage=raw.get("lineage"),
            unparsed=raw.get("unparsed", False),
        )


@dataclass(frozen=True)
class DefectRecord:
    id: str
    component: str
    severity: str
    description: str
    requirement_ref: str | None = None

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise DomainError(f"unknown severity {self.severity!r}")
        if not self.component:
            raise DomainError("defect component must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "component": self.component,
            "severity": self.severity,
            "description": self.description,
            "requirement_ref": self.requirement_ref,
        }


@dataclass(frozen=True)
class AugmentationConfig:
    noise_rate: float = 0.0
    permutation_enabled: bool = False
    variants_per_record: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigError(f"noise_rate must be in [0,1], got {self.noise_rate}")
        if self.variants_per_record < 0:
            raise ConfigError("variants_per_record must be non-negative")


@dataclass(frozen=True)
class ExtractionScore:
    precision: float
    recall: float
    per_entity: dict[str, tuple[float, float]]


_ID_TAG_RE = re.compile(r"^\s*\[(?P<id>[^\]]*)\]\s*(?P<rest>.*)$")
_ID_OK_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_MODAL_RE = re.compile(r"\b(shall|must|should)\b", re.IGNORECASE)
_CONDITION_MARKER_RE = re.compile(
    r"\b(when|if|while|unless|where|given|provided)\b", re.IGNORECASE
)
_OUTCOME_MARKER_RE = re.compile(r"\bso that\b", re.IGNORECASE)
_ARTICLES = ("the", "a", "an")
_OBJECT_STOP_WORDS = frozenset({"to", "into", "from", "for", "with", "at", "on", "in", "by"})
_LINKING_VERBS = frozenset({"is", "are", "was", "were", "be", "been", "being"})

_PRIORITY_BY_MODAL = {"must": "high", "shall": "medium", "should": "low"}

# Ordered: earlier rows win. Symbols before their prefixes, phrases before bare "is".
_COMPARATOR_LEXICON: list[tuple[re.Pattern, str, bool]] = [
    (re.compile(p, re.IGNORECASE), comp, needs_value)
    for p, comp, needs_value in [
        (r">=|≥", "ge", True),
        (r"<=|≤", "le", True),
        (r"!=|≠", "ne", True),
        (r"==", "eq", True),
        (r"\bis at least\b|\bat least\b|\bno less than\b|\bgreater than or equal to\b", "ge", True),
        (r"\bis at most\b|\bat most\b|\bno more than\b|\bless than or equal to\b", "le", True),
        (r"\bis not equal to\b|\bnot equal to\b|\bdiffers from\b", "ne", True),
        (r"\bmore than\b|\bgreater than\b|\bexceeds\b|\bis above\b|\babove\b", "gt", True),
        (r"\bless than\b|\bfewer than\b|\bis below\b|\bbelow\b|\bis under\b|\bunder\b", "lt", True),
        (r"\bis present\b|\bare present\b|\bexists\b|\bis provided\b", "present", False),
        (r"\bis absent\b|\bare absent\b|\bis missing\b|\bdoes not exist\b", "absent", False),
        (r"\bequals\b|\bis equal to\b|\bequal to\b|\bis set to\b", "eq", True),
        (r">", "gt", True),
        (r"<", "lt", True),
        (r"=", "eq", True),
        (r"\bis not\b", "ne", True),
        (r"\bis\b|\bare\b", "eq", True),
    ]
]

_NUMBER_RE = re.compile(r"^[+-]?\d+(\.\d+)?$")


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _normalize_phrase(text: str) -> str | None:
    words = [w.strip(".,;:!?\"'()") for w in text.strip().lower().split()]
    words = [w for w in words if w]
    while words and words[0] in _ARTICLES:
        words = words[1:]
    while words and words[-1] in _LINKING_VERBS:
        words = words[:-1]
    return " ".join(words) if words else None


def _parse_scalar(text: str) -> Scalar | None:
    token = text.strip().strip(".,;:!?")
    if not token:
        return None
    if (token.startswith('"') and token.endswith('"')) or (
        token.startswith("'") and token.endswith("'")
    ):
        return token[1:-1]
    bare = token.rstrip("%")
    if _NUMBER_RE.match(bare):
        return int(bare) if "." not in bare else float(bare)
    if token.lower() in ("true", "false"):
        return token.lower() == "true"
    normalized = _normalize_phrase(token)
    return normalized


def _parse_condition_phrase(phrase: str) -> Condition | None:
    for pattern, comparator, needs_value in _COMPARATOR_LEXICON:
        match = pattern.search(phrase)
        if match is None:
            continue
        subject = _normalize_phrase(phrase[: match.start()])
        if subject is None:
            return None
        if not needs_value:
            return Condition(subject=subject, comparator=comparator)
        value = _parse_scalar(phrase[match.end() :])
        if value is None:
            return None
        if comparator in NUMERIC_COMPARATORS and not _is_number(value):
            # Numeric comparators require numbers; drop the condition rather
            # than emit an invalid record.
            return None
        return Condition(subject=subject, comparator=comparator, value=value)
    return None


def _parse_statement(record_id: str, statement: str) -> RequirementRecord:
    body = statement
    expected_outcome = None
    outcome_match = _OUTCOME_MARKER_RE.search(body)
    if outcome_match:
        expected_outcome = _normalize_phrase(body[outcome_match.end() :])
        body = body[: outcome_match.start()]

    modal_match = _MODAL_RE.search(body)
    if modal_match is None:
        return RequirementRecord(id=record_id, raw_text=statement, unparsed=True)

    actor = _normalize_phrase(body[: modal_match.start()])
    tail = body[modal_match.end() :]

    conditions: list[Condition] = []
    cond_match = _CONDITION_MARKER_RE.search(tail)
    if cond_match:
        cond_text = tail[cond_match.end() :]
        tail = tail[: cond_match.start()]
        for phrase in re.split(r"\s+and\s+", cond_text, flags=re.IGNORECASE):
            parsed = _parse_condition_phrase(phrase)
            if parsed is not None:
                conditions.append(parsed)

    tail_words = [w.strip(".,;:!?\"'()") for w in tail.split()]
    tail_words = [w for w in tail_words if w]
    action = tail_words[0].lower() if tail_words else None
    object_words: list[str] = []
    for word in tail_words[1:]:
        if word.lower() in _OBJECT_STOP_WORDS:
            break
        object_words.append(word)
    obj = _normalize_phrase(" ".join(object_words)) if object_words else None

    if action is None and obj is None:
        return RequirementRecord(id=record_id, raw_text=statement, unparsed=True)

    return RequirementRecord(
        id=record_id,
        raw_text=statement,
        actor=actor,
        action=action,
        object=obj,
        conditions=conditions,
        expected_outcome=expected_outcome,
        priority=_PRIORITY_BY_MODAL[modal_match.group(1).lower()],
    )


def parse_requirements(doc: str) -> list[RequirementRecord]:
    """Parse a requirement document: one statement per non-empty line."""
    records: list[RequirementRecord] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(doc.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        record_id = f"L{lineno}"
        statement = stripped
        if stripped.startswith("["):
            tag = _ID_TAG_RE.match(stripped)
            if tag is None or not _ID_OK_RE.match(tag.group("id")):
                raise ParseError(f"line {lineno}: malformed [id] tag")
            record_id = tag.group("id")
            statement = tag.group("rest").strip()
        if record_id in seen_ids:
            raise ParseError(f"line {lineno}: duplicate requirement id {record_id!r}")
        seen_ids.add(record_id)
        if not statement:
            records.append(RequirementRecord(id=record_id, raw_text="", unparsed=True))
            continue
        records.append(_parse_statement(record_id, statement))
    return records


def parse_defect_log(text: str) -> list[DefectRecord]:
    """Parse pipe-delimited defect lines: id|component|severity|description[|req]."""
    records: list[DefectRecord] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        fields = [f.strip() for f in stripped.split("|")]
        if len(fields) not in (4, 5):
            raise ParseError(f"line {lineno}: expected 4 or 5 fields, got {len(fields)}")
        defect_id, component, severity, description = fields[:4]
        req = fields[4] if len(fields) == 5 else None
        if severity not in SEVERITIES:
            raise ParseError(f"line {lineno}: unknown severity {severity!r}")
        if not component:
            raise ParseError(f"line {lineno}: empty component")
        records.append(
            DefectRecord(
                id=defect_id,
                component=component,
                severity=severity,
                description=description,
                requirement_ref=req,
            )
        )
    return records


def _decimals_of(value: Scalar) -> int:
    if isinstance(value, int):
        return 0
    text = repr(float(value))
    if "e" in text or "E" in text or "." not in text:
        return 0
    return min(len(text.split(".", 1)[1]), 12)


def _perturb(value: Scalar, noise_rate: float, rng: random.Random) -> Scalar:
    delta = noise_rate * abs(float(value))
    sign = rng.choice((-1.0, 1.0))
    perturbed = float(value) + sign * delta
    decimals = _decimals_of(value)
    rounded = round(perturbed, decimals)
    if isinstance(value, int):
        return int(rounded)
    return rounded


def augment(records: list[RequirementRecord], cfg: AugmentationConfig) -> list[RequirementRecord]:
    """Return originals followed by seeded noise/permutation variants.

    A record is augmentable when noise can apply (noise_rate > 0 and it has a
    numeric condition) or permutation can apply (enabled and >= 2 conditions).
    Same seed, same records, same config => identical output.
    """
    rng = random.Random(cfg.seed)
    out = list(records)
    for rec in records:
        numeric_idx = [
            i for i, c in enumerate(rec.conditions) if c.value is not None and _is_number(c.value)
        ]
        can_noise = cfg.noise_rate > 0 and bool(numeric_idx)
        can_permute = cfg.permutation_enabled and len(rec.conditions) >= 2
        if not (can_noise or can_permute):
            continue
        for k in range(cfg.variants_per_record):
            conditions = list(rec.conditions)
            if can_permute:
                shift = rng.randrange(1, len(conditions))
                conditions = conditions[shift:] + conditions[:shift]
            if can_noise:
                conditions = [
                    replace(c, value=_perturb(c.value, cfg.noise_rate, rng))
                    if c.value is not None and _is_number(c.value)
                    else c
                    for c in conditions
                ]
            out.append(
                replace(
                    rec,
                    id=f"{rec.id}-v{k + 1}",
                    conditions=conditions,
                    lineage=rec.id,
                )
            )
    return out


_SCALAR_KINDS = ("actor", "action", "object", "expected_outcome")


def _condition_key(c: Condition) -> tuple:
    value = c.value
    if _is_number(value):
        value = float(value)
    return (c.subject, c.comparator, value)


def evaluate_extraction(
    predicted: list[RequirementRecord], gold: list[RequirementRecord]
) -> ExtractionScore:
    """Per-entity-kind precision/recall by exact slot-value match, micro-averaged.

    Records are matched by id; a predicted id absent from gold is an error.
    An empty denominator scores 1.0 (vacuously perfect).
    """
    gold_by_id = {r.id: r for r in gold}
    pred_by_id: dict[str, RequirementRecord] = {}
    for r in predicted:
        if r.id not in gold_by_id:
            raise DomainError(f"predicted id {r.id!r} not present in gold")
        pred_by_id[r.id] = r

    counts = {kind: [0, 0, 0] for kind in (*_SCALAR_KINDS, "condition")}  # tp, fp, fn

    for rid, g in gold_by_id.items():
        p = pred_by_id.get(rid)
        for kind in _SCALAR_KINDS:
            gv = getattr(g, kind)
            pv = getattr(p, kind) if p is not None else None
            tp_fp_fn = counts[kind]
            if pv is not None and gv is not None and pv == gv:
                tp_fp_fn[0] += 1
            else:
                if pv is not None:
                    tp_fp_fn[1] += 1
                if gv is not None:
                    tp_fp_fn[2] += 1
        gold_conds = [_condition_key(c) for c in g.conditions]
        pred_conds = [_condition_key(c) for c in (p.conditions if p is not None else [])]
        remaining = list(gold_conds)
        tp = 0
        for c in pred_conds:
            if c in remaining:
                remaining.remove(c)
                tp += 1
        counts["condition"][0] += tp
        counts["condition"][1] += len(pred_conds) - tp
        counts["condition"][2] += len(gold_conds) - tp

    def ratio(numer: int, denom: int) -> float:
        return numer / denom if denom else 1.0

    per_entity = {}
    total_tp = total_fp = total_fn = 0
    for kind, (tp, fp, fn) in counts.items():
        per_entity[kind] = (ratio(tp, tp + fp), ratio(tp, tp + fn))
        total_tp += tp
        total_fp += fp
        total_fn += fn
    return ExtractionScore(
        precision=ratio(total_tp, total_tp + total_fp),
        recall=ratio(total_tp, total_tp + total_fn),
        per_entity=per_entity,
    )


def records_to_json(records: list[RequirementRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2, ensure_ascii=False)


def records_from_json(text: str) -> list[RequirementRecord]:
    return [RequirementRecord.from_dict(raw) for raw in json.loads(text)]
