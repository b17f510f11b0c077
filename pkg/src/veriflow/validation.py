"""Defect-vs-false-alarm classification: declarative rules plus an
L2-regularized logistic model, combined by weighted voting.

Training follows a stratified 70-20-10 split. The regularization strength
is chosen by 5-fold cross-validation on the training portion (mean
validation log-loss), the final model is fit on train+val with plain
gradient descent (step size from a Lipschitz bound, so the loss decreases
monotonically), and precision/recall/FNR are reported on the untouched
10% test split.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)

OUTCOMES = ("pass", "fail", "error")
TRUE_DEFECT = "true_defect"
FALSE_ALARM = "false_alarm"

DEFAULT_FEATURES = (
    "outcome_fail",
    "outcome_error",
    "duration_z",
    "covered_unit_count",
    "historical_failure_rate",
    "signal_mean",
)
DEFAULT_VOTE_WEIGHTS = (0.4, 0.6)

GRADIENT_TOLERANCE = 1e-6
MAX_GD_STEPS = 10_000


@dataclass
class ExecutionRecord:
    case_id: str
    outcome: str
    observed: dict[str, float]
    expected: object = None
    duration: float = 0.0
    context: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise DomainError(f"unknown outcome {self.outcome!r}")

    @property
    def signal_max(self) -> float:
        return max(self.observed.values()) if self.observed else 0.0

    @property
    def signal_mean(self) -> float:
        return sum(self.observed.values()) / len(self.observed) if self.observed else 0.0

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "outcome": self.outcome,
            "observed": dict(sorted(self.observed.items())),
            "duration": self.duration,
            "context": dict(sorted(self.context.items())),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExecutionRecord":
        return cls(
            case_id=raw["case_id"],
            outcome=raw["outcome"],
            observed=dict(raw.get("observed", {})),
            duration=raw.get("duration", 0.0),
            context=dict(raw.get("context", {})),
        )


@dataclass(frozen=True)
class Rule:
    id: str
    field: str
    comparator: str
    value: object = None
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0:
            raise ConfigError(f"rule {self.id}: weight must be positive")

    def _resolve(self, rec: ExecutionRecord):
        if self.field == "outcome":
            return rec.outcome
        if self.field == "duration":
            return rec.duration
        if self.field == "case_id":
            return rec.case_id
        if self.field == "signal_max":
            return rec.signal_max
        if self.field == "signal_mean":
            return rec.signal_mean
        if self.field.startswith("observed."):
            return rec.observed.get(self.field[len("observed.") :])
        if self.field.startswith("context."):
            return rec.context.get(self.field[len("context.") :])
        return None

    def satisfied(self, rec: ExecutionRecord) -> bool:
        actual = self._resolve(rec)
        comp = self.comparator
        if comp == "present":
            return actual is not None
        if comp == "absent":
            return actual is None
        if comp == "eq":
            return actual == self.value
        if comp == "ne":
            return actual != self.value
        if actual is None or isinstance(actual, str):
            return False
        if comp == "lt":
            return actual < self.value
        if comp == "le":
            return actual <= self.value
        if comp == "gt":
            return actual > self.value
        if comp == "ge":
            return actual >= self.value
        raise ConfigError(f"rule {self.id}: unknown comparator {comp!r}")


def load_rule_pack(doc: str | list) -> list[Rule]:
    raw = json.loads(doc) if isinstance(doc, str) else doc
    return [
        Rule(
            id=item["id"],
            field=item["field"],
            comparator=item["comparator"],
            value=item.get("value"),
            weight=item.get("weight", 1.0),
        )
        for item in raw
    ]


def rule_score(rules: list[Rule], rec: ExecutionRecord) -> float:
    """Weight of satisfied rules over total weight."""
    if not rules:
        raise DomainError("rule set must be non-empty")
    total = sum(r.weight for r in rules)
    satisfied = sum(r.weight for r in rules if r.satisfied(rec))
    return satisfied / total


@dataclass
class LinearModel:
    feature_schema: tuple[str, ...]
    weights: np.ndarray
    bias: float
    regularization: float
    feature_stats: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.feature_schema),):
            raise ConfigError("weight vector length must match the feature schema")

    def to_dict(self) -> dict:
        return {
            "feature_schema": list(self.feature_schema),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "regularization": float(self.regularization),
            "feature_stats": {k: list(v) for k, v in sorted(self.feature_stats.items())},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "LinearModel":
        return cls(
            feature_schema=tuple(raw["feature_schema"]),
            weights=np.array(raw["weights"], dtype=float),
            bias=float(raw["bias"]),
            regularization=float(raw.get("regularization", 0.0)),
            feature_stats={k: tuple(v) for k, v in raw.get("feature_stats", {}).items()},
        )


def extract_features(
    rec: ExecutionRecord,
    schema: tuple[str, ...],
    stats: dict[str, tuple[float, float]] | None = None,
    warn_missing: bool = False,
) -> np.ndarray:
    stats = stats or {}
    values = []
    for name in schema:
        if name == "outcome_fail":
            values.append(1.0 if rec.outcome == "fail" else 0.0)
        elif name == "outcome_error":
            values.append(1.0 if rec.outcome == "error" else 0.0)
        elif name == "duration_z":
            mean, std = stats.get("duration", (0.0, 1.0))
            values.append((rec.duration - mean) / (std if std > 0 else 1.0))
        elif name == "covered_unit_count":
            values.append(float(len(rec.observed)))
        elif name == "signal_mean":
            values.append(rec.signal_mean)
        elif name == "signal_max":
            values.append(rec.signal_max)
        elif name in rec.context:
            values.append(float(rec.context[name]))
        else:
            if warn_missing:
                log.warning("record %s missing feature %r, using 0", rec.case_id, name)
            values.append(0.0)
    return np.array(values, dtype=float)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def loss_and_gradient(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float
) -> tuple[float, np.ndarray, float]:
    """Mean cross-entropy with L2 penalty (lam/2m)*||w||^2; bias unregularized."""
    m = X.shape[0]
    p = _sigmoid(X @ w + b)
    eps = 1e-12
    ce = -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
    loss = ce + (lam / (2 * m)) * float(w @ w)
    grad_w = X.T @ (p - y) / m + (lam / m) * w
    grad_b = float(np.mean(p - y))
    return float(loss), grad_w, grad_b


def _gradient(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float
) -> tuple[np.ndarray, float]:
    """Gradient of the same objective, without the loss value (descent loop)."""
    m = X.shape[0]
    residual = _sigmoid(X @ w + b) - y
    grad_w = X.T @ residual / m + (lam / m) * w
    grad_b = float(residual.mean())
    return grad_w, grad_b


def _fit_logistic(
    X: np.ndarray, y: np.ndarray, lam: float, max_steps: int = MAX_GD_STEPS
) -> tuple[np.ndarray, float, int]:
    m, d = X.shape
    w = np.zeros(d)
    b = 0.0
    # Lipschitz constant of the gradient: sigma_max^2/(4m) + lam/m over the
    # bias-augmented design; 1/L steps guarantee monotone descent.
    X1 = np.hstack([X, np.ones((m, 1))])
    sigma_max = np.linalg.norm(X1, 2)
    lipschitz = sigma_max**2 / (4 * m) + lam / m
    lr = 1.0 / max(lipschitz, 1e-12)
    steps = 0
    for steps in range(1, max_steps + 1):
        grad_w, grad_b = _gradient(X, y, w, b, lam)
        grad_norm = math.sqrt(float(grad_w @ grad_w) + grad_b**2)
        if grad_norm < GRADIENT_TOLERANCE:
            break
        w = w - lr * grad_w
        b = b - lr * grad_b
    return w, b, steps


def _log_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
    p = _sigmoid(X @ w + b)
    eps = 1e-12
    return float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))


@dataclass(frozen=True)
class TrainReport:
    split: tuple[float, float, float]
    folds: int
    chosen_lambda: float
    test_precision: float
    test_recall: float
    false_negative_rate: float

    def to_dict(self) -> dict:
        return {
            "split": list(self.split),
            "folds": self.folds,
            "chosen_lambda": self.chosen_lambda,
            "test_precision": self.test_precision,
            "test_recall": self.test_recall,
            "false_negative_rate": self.false_negative_rate,
        }


def _stratified_indices(
    labels: list[bool], fractions: tuple[float, ...], rng: random.Random
) -> list[list[int]]:
    """Partition indices into len(fractions) buckets, stratified by label."""
    buckets: list[list[int]] = [[] for _ in fractions]
    for cls in (False, True):
        idx = [i for i, lab in enumerate(labels) if lab is cls]
        rng.shuffle(idx)
        n = len(idx)
        cuts = []
        acc = 0
        for frac in fractions[:-1]:
            take = round(frac * n)
            cuts.append((acc, acc + take))
            acc += take
        cuts.append((acc, n))
        for bucket, (lo, hi) in zip(buckets, cuts):
            bucket.extend(idx[lo:hi])
    for bucket in buckets:
        bucket.sort()
    return buckets


def train_model(
    dataset: list[tuple[ExecutionRecord, bool]],
    lambda_grid: list[float],
    seed: int = 0,
    schema: tuple[str, ...] = DEFAULT_FEATURES,
) -> tuple[LinearModel, TrainReport]:
    """Train the logistic defect classifier with the 70-20-10 protocol.

    Labels are True for a real defect. Records with outcome "pass" must not
    be labeled True; that is a corrupt training set.
    """
    if len(dataset) < 50:
        raise DomainError(f"need >= 50 labeled records, got {len(dataset)}")
    if not lambda_grid:
        raise ConfigError("lambda grid must be non-empty")
    labels = [bool(lab) for _, lab in dataset]
    if len(set(labels)) < 2:
        raise DomainError("training data must contain both classes")
    for rec, lab in dataset:
        if rec.outcome == "pass" and lab:
            raise DomainError(f"record {rec.case_id}: passing outcome labeled as true defect")

    rng = random.Random(seed)
    train_idx, val_idx, test_idx = _stratified_indices(labels, (0.70, 0.20, 0.10), rng)

    def stats_of(indices: list[int]) -> dict[str, tuple[float, float]]:
        durations = [dataset[i][0].duration for i in indices]
        mean = sum(durations) / len(durations)
        var = sum((d - mean) ** 2 for d in durations) / len(durations)
        return {"duration": (mean, math.sqrt(var))}

    def matrix(indices: list[int], stats) -> tuple[np.ndarray, np.ndarray]:
        X = np.array([extract_features(dataset[i][0], schema, stats) for i in indices])
        y = np.array([1.0 if labels[i] else 0.0 for i in indices])
        return X, y

    # Lambda selection: 5-fold CV on the training portion only.
    fold_rng = random.Random(seed + 1)
    fold_labels = [labels[i] for i in train_idx]
    folds = _stratified_indices(fold_labels, (0.2, 0.2, 0.2, 0.2, 0.2), fold_rng)
    fold_members = [[train_idx[j] for j in fold] for fold in folds]

    best_lambda = None
    best_loss = None
    for lam in lambda_grid:
        losses = []
        for held in range(5):
            fit_idx = [i for f in range(5) if f != held for i in fold_members[f]]
            if not fold_members[held] or not fit_idx:
                continue
            stats = stats_of(fit_idx)
            Xf, yf = matrix(fit_idx, stats)
            Xv, yv = matrix(fold_members[held], stats)
            # CV fits only rank lambdas; a shorter step budget suffices.
            w, b, _ = _fit_logistic(Xf, yf, lam, max_steps=2000)
            losses.append(_log_loss(Xv, yv, w, b))
        mean_loss = sum(losses) / len(losses)
        if best_loss is None or mean_loss < best_loss - 1e-12:
            best_loss, best_lambda = mean_loss, lam

    fit_idx = train_idx + val_idx
    stats = stats_of(fit_idx)
    Xf, yf = matrix(fit_idx, stats)
    w, b, _ = _fit_logistic(Xf, yf, best_lambda)
    model = LinearModel(
        feature_schema=schema,
        weights=w,
        bias=b,
        regularization=best_lambda,
        feature_stats=stats,
    )

    Xt, yt = matrix(test_idx, stats)
    preds = _sigmoid(Xt @ w + b) >= 0.5
    tp = int(np.sum(preds & (yt == 1)))
    fp = int(np.sum(preds & (yt == 0)))
    fn = int(np.sum(~preds & (yt == 1)))
    report = TrainReport(
        split=(0.70, 0.20, 0.10),
        folds=5,
        chosen_lambda=best_lambda,
        test_precision=tp / (tp + fp) if tp + fp else 1.0,
        test_recall=tp / (tp + fn) if tp + fn else 1.0,
        false_negative_rate=fn / (fn + tp) if fn + tp else 0.0,
    )
    return model, report


def predict(model: LinearModel, rec: ExecutionRecord) -> float:
    x = extract_features(rec, model.feature_schema, model.feature_stats, warn_missing=True)
    return float(_sigmoid(np.array([x @ model.weights + model.bias]))[0])


def predict_matrix(model: LinearModel, X: np.ndarray) -> np.ndarray:
    return _sigmoid(X @ model.weights + model.bias)


@dataclass(frozen=True)
class VerdictRecord:
    case_id: str
    verdict: str
    confidence: float
    rule_score: float
    model_score: float
    vote_weights: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "verdict": self.verdict,
            "confidence": self.confidence,
            "rule_score": self.rule_score,
            "model_score": self.model_score,
            "vote_weights": list(self.vote_weights),
        }


def ensemble_verdict(
    case_id: str,
    rule_score_value: float,
    model_score_value: float,
    weights: tuple[float, float] = DEFAULT_VOTE_WEIGHTS,
    threshold: float = 0.5,
) -> VerdictRecord:
    """Weighted vote of the two scores; true_defect iff confidence >= threshold."""
    w_rule, w_model = weights
    if abs(w_rule + w_model - 1.0) > 1e-9:
        raise ConfigError(f"vote weights must sum to 1, got {weights}")
    for name, score in (("rule", rule_score_value), ("model", model_score_value)):
        if not 0.0 <= score <= 1.0:
            raise DomainError(f"{name} score must be in [0,1], got {score}")
    confidence = w_rule * rule_score_value + w_model * model_score_value
    return VerdictRecord(
        case_id=case_id,
        verdict=TRUE_DEFECT if confidence >= threshold else FALSE_ALARM,
        confidence=confidence,
        rule_score=rule_score_value,
        model_score=model_score_value,
        vote_weights=(w_rule, w_model),
    )


def evaluate_classifier(
    verdicts: list[VerdictRecord], gold: dict[str, bool]
) -> tuple[float, float, float]:
    """(precision, recall, false negative rate); positives are true defects."""
    tp = fp = fn = 0
    for v in verdicts:
        if v.case_id not in gold:
            raise DomainError(f"no gold label for {v.case_id!r}")
        truth = gold[v.case_id]
        predicted = v.verdict == TRUE_DEFECT
        if predicted and truth:
            tp += 1
        elif predicted and not truth:
            fp += 1
        elif not predicted and truth:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    fnr = fn / (fn + tp) if fn + tp else 0.0
    return precision, recall, fnr


def tune_vote_weights(
    rule_scores: list[float],
    model_scores: list[float],
    labels: list[bool],
    threshold: float = 0.5,
) -> tuple[float, float]:
    """Grid-search w_rule over {0, 0.1, ..., 1} maximizing F1 on the given split."""
    best = DEFAULT_VOTE_WEIGHTS
    best_f1 = -1.0
    for step in range(11):
        w_rule = step / 10
        tp = fp = fn = 0
        for rs, ms, lab in zip(rule_scores, model_scores, labels):
            predicted = (w_rule * rs + (1 - w_rule) * ms) >= threshold
            if predicted and lab:
                tp += 1
            elif predicted and not lab:
                fp += 1
            elif not predicted and lab:
                fn += 1
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        if f1 > best_f1 + 1e-12:
            best_f1 = f1
            best = (w_rule, 1 - w_rule)
    return best
