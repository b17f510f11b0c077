"""Demographic parity, k-anonymity with greedy generalization, and
sampled-Shapley feature attribution."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

DEFAULT_PARITY_THRESHOLD = 0.05


@dataclass(frozen=True)
class OutcomeTable:
    """Per-group positive-outcome counts: group label -> (positives, total)."""

    groups: dict[str, tuple[int, int]]

    def __post_init__(self):
        for label, (pos, total) in self.groups.items():
            if total <= 0:
                raise DomainError(f"group {label!r} has zero total")
            if pos < 0 or pos > total:
                raise DomainError(f"group {label!r}: positives must be in [0, total]")


@dataclass(frozen=True)
class ParityReport:
    rates: dict[str, float]
    gap: float
    equity_index: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "rates": dict(sorted(self.rates.items())),
            "gap": self.gap,
            "equity_index": self.equity_index,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def parity(table: OutcomeTable, threshold: float = DEFAULT_PARITY_THRESHOLD) -> ParityReport:
    """Selection rates per group; gap = max pairwise absolute difference."""
    if not table.groups:
        raise DomainError("outcome table needs at least one group")
    rates = {g: pos / total for g, (pos, total) in table.groups.items()}
    values = list(rates.values())
    gap = max(values) - min(values) if len(values) > 1 else 0.0
    max_rate = max(values)
    equity_index = 1.0 if max_rate == 0 else min(values) / max_rate
    return ParityReport(
        rates=rates,
        gap=gap,
        equity_index=equity_index,
        threshold=threshold,
        passed=gap < threshold,
    )


class Coarsener:
    """One ladder level: maps an original cell value to its generalization."""

    def __init__(self, name: str, fn):
        self.name = name
        self._fn = fn

    def __call__(self, value):
        return self._fn(value)


def _bin_coarsener(width: float) -> Coarsener:
    def fn(value):
        lo = int(float(value) // width * width)
        return f"{lo}-{lo + int(width) - 1}" if width == int(width) else f"{lo}-{lo + width}"

    return Coarsener(f"bin{width}", fn)


def _prefix_coarsener(length: int) -> Coarsener:
    return Coarsener(f"prefix{length}", lambda v: str(v)[:length] + "*")


def _map_coarsener(mapping: dict, default: str = "*") -> Coarsener:
    return Coarsener("map", lambda v: mapping.get(str(v), default))


SUPPRESS = Coarsener("suppress", lambda _v: "*")


def ladder_from_spec(spec: list[dict]) -> list[Coarsener]:
    """Build a ladder from JSON descriptors; the last level must suppress."""
    ladder: list[Coarsener] = []
    for level in spec:
        kind = level.get("kind")
        if kind == "bin":
            ladder.append(_bin_coarsener(level["width"]))
        elif kind == "prefix":
            ladder.append(_prefix_coarsener(level["length"]))
        elif kind == "map":
            ladder.append(_map_coarsener(level["mapping"], level.get("default", "*")))
        elif kind == "suppress":
            ladder.append(SUPPRESS)
        else:
            raise ConfigError(f"unknown ladder level kind {kind!r}")
    if not ladder or ladder[-1].name != "suppress":
        raise ConfigError("generalization ladders must end in suppression")
    return ladder


@dataclass
class QuasiIdentifierTable:
    columns: tuple[str, ...]
    rows: list[tuple]
    hierarchies: dict[str, list[Coarsener]]
    levels: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise DomainError(f"row {row!r} arity != {len(self.columns)} columns")
        for col, ladder in self.hierarchies.items():
            if not ladder or ladder[-1].name != "suppress":
                raise DomainError(f"ladder for {col!r} must end in suppression")
        if not self.levels:
            self.levels = {c: 0 for c in self.columns}

    def generalized_rows(self, levels: dict[str, int] | None = None) -> list[tuple]:
        """Rows with each column coarsened to its level (0 = raw)."""
        levels = levels if levels is not None else self.levels
        out = []
        for row in self.rows:
            cells = []
            for col, value in zip(self.columns, row):
                level = levels.get(col, 0)
                cells.append(self.hierarchies[col][level - 1](value) if level > 0 else value)
            out.append(tuple(cells))
        return out


def check_k_anonymity(
    table: QuasiIdentifierTable, k: int
) -> tuple[bool, list[tuple[tuple, int]]]:
    """Group rows by their full quasi-identifier tuple; pass iff every class >= k."""
    if k < 1:
        raise DomainError("k must be >= 1")
    classes = Counter(table.generalized_rows())
    violating = sorted(
        ((cls, size) for cls, size in classes.items() if size < k),
        key=lambda item: tuple(str(cell) for cell in item[0]),
    )
    return (not violating, violating)


def _violating_row_count(rows: list[tuple], k: int) -> int:
    classes = Counter(rows)
    return sum(size for size in classes.values() if size < k)


def anonymize(table: QuasiIdentifierTable, k: int) -> QuasiIdentifierTable:
    """Greedy minimal generalization until the table is k-anonymous.

    Each step generalizes one level the attribute whose bump most reduces
    the number of rows in undersized classes (ties: leftmost column). Rows
    are never reordered or dropped; ladders end in suppression so the loop
    terminates.
    """
    if k > len(table.rows):
        raise DomainError(f"k={k} exceeds row count {len(table.rows)}")
    for col in table.columns:
        if col not in table.hierarchies:
            raise DomainError(f"column {col!r} has no generalization ladder")
    levels = dict(table.levels)
    while True:
        current = table.generalized_rows(levels)
        if _violating_row_count(current, k) == 0:
            break
        best_col = None
        best_count = None
        for col in table.columns:
            if levels[col] >= len(table.hierarchies[col]):
                continue
            trial = dict(levels)
            trial[col] += 1
            count = _violating_row_count(table.generalized_rows(trial), k)
            if best_count is None or count < best_count:
                best_col, best_count = col, count
        if best_col is None:
            raise DomainError("no generalization left but table still violates k-anonymity")
        levels[best_col] += 1
    return QuasiIdentifierTable(
        columns=table.columns,
        rows=table.generalized_rows(levels),
        hierarchies=table.hierarchies,
        levels={c: 0 for c in table.columns},
    )


@dataclass(frozen=True)
class AttributionReport:
    instance_id: str
    per_feature: dict[str, float]
    baseline: float
    prediction: float
    n_permutations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "per_feature": dict(sorted(self.per_feature.items())),
            "baseline": self.baseline,
            "prediction": self.prediction,
            "n_permutations": self.n_permutations,
            "seed": self.seed,
        }


def permutation_attribution(
    predict_fn,
    feature_names: list[str],
    instance: dict[str, float],
    background: list[dict[str, float]],
    n_permutations: int = 100,
    seed: int = 0,
    instance_id: str = "instance",
) -> AttributionReport:
    """Sampled-Shapley attributions for one instance.

    For each of n_permutations random feature orderings and each background
    row, features of the background row are replaced one by one with the
    instance's values; each feature is credited the marginal change in model
    output. Credits average over (ordering, row) pairs, so the attributions
    sum to prediction - baseline up to float rounding for any model.

    predict_fn takes an (m, d) array and returns m outputs.
    """
    if not background:
        raise DomainError("background set must be non-empty")
    if n_permutations < 1:
        raise DomainError("n_permutations must be >= 1")
    missing = [f for f in feature_names if f not in instance]
    if missing:
        raise DomainError(f"instance missing features: {missing}")
    for row in background:
        gaps = [f for f in feature_names if f not in row]
        if gaps:
            raise DomainError(f"background row missing features: {gaps}")

    d = len(feature_names)
    x = np.array([float(instance[f]) for f in feature_names])
    bg = np.array([[float(row[f]) for f in feature_names] for row in background])
    n_bg = bg.shape[0]

    baseline = float(np.mean(predict_fn(bg)))
    prediction = float(predict_fn(x.reshape(1, -1))[0])

    rng = random.Random(seed)
    credit = np.zeros(d)
    order = list(range(d))
    for _ in range(n_permutations):
        rng.shuffle(order)
        # Stack the walk: row k has the first k features of the ordering
        # replaced by instance values, for every background row at once.
        walk = np.repeat(bg[:, None, :], d + 1, axis=1)  # (n_bg, d+1, d)
        for pos, feat in enumerate(order):
            walk[:, pos + 1 :, feat] = x[feat]
        outputs = predict_fn(walk.reshape(-1, d)).reshape(n_bg, d + 1)
        marginals = outputs[:, 1:] - outputs[:, :-1]  # (n_bg, d) in ordering position
        summed = marginals.sum(axis=0)
        for pos, feat in enumerate(order):
            credit[feat] += summed[pos]
    credit /= n_permutations * n_bg

    return AttributionReport(
        instance_id=instance_id,
        per_feature={f: float(credit[i]) for i, f in enumerate(feature_names)},
        baseline=baseline,
        prediction=prediction,
        n_permutations=n_permutations,
        seed=seed,
    )
