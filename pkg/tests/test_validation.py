from __future__ import annotations

import math
import random

import numpy as np
import pytest

from veriflow.errors import ConfigError, DomainError
from veriflow.resources import data_text
from veriflow.validation import (
    DEFAULT_FEATURES,
    ExecutionRecord,
    LinearModel,
    Rule,
    TrainReport,
    ensemble_verdict,
    evaluate_classifier,
    extract_features,
    load_rule_pack,
    loss_and_gradient,
    predict,
    rule_score,
    train_model,
    tune_vote_weights,
)


def _record(outcome="fail", duration=50.0, observed=None, context=None, case_id="c1"):
    return ExecutionRecord(
        case_id=case_id,
        outcome=outcome,
        observed=observed if observed is not None else {"u1": 0.9, "u2": 0.4},
        duration=duration,
        context=context or {},
    )


# -- rules --------------------------------------------------------------------


def test_rule_score_all_satisfied():
    rules = [Rule(id="a", field="outcome", comparator="eq", value="fail")]
    assert rule_score(rules, _record()) == 1.0


def test_rule_score_weighted():
    rules = [
        Rule(id="a", field="outcome", comparator="eq", value="fail", weight=2),
        Rule(id="b", field="duration", comparator="gt", value=30, weight=1),
        Rule(id="c", field="duration", comparator="gt", value=90, weight=1),
    ]
    assert rule_score(rules, _record(duration=50)) == pytest.approx(0.75)


def test_rule_score_none_satisfied():
    rules = [Rule(id="a", field="outcome", comparator="eq", value="error")]
    assert rule_score(rules, _record()) == 0.0


def test_rule_score_empty_rules():
    with pytest.raises(DomainError):
        rule_score([], _record())


def test_rule_field_paths():
    rec = _record(context={"retry_count": 3})
    assert rule_score([Rule(id="r", field="context.retry_count", comparator="ge", value=2)], rec) == 1.0
    assert rule_score([Rule(id="r", field="observed.u1", comparator="ge", value=0.8)], rec) == 1.0
    assert rule_score([Rule(id="r", field="signal_max", comparator="ge", value=0.8)], rec) == 1.0
    assert rule_score([Rule(id="r", field="context.missing", comparator="absent")], rec) == 1.0


def test_default_rule_pack_loads():
    rules = load_rule_pack(data_text("rules_default.json"))
    assert len(rules) == 12
    assert all(r.weight > 0 for r in rules)


# -- model --------------------------------------------------------------------


def _separable_dataset(n=60, seed=1):
    """Defect records run long and hot; clean records run short and cold."""
    rng = random.Random(seed)
    dataset = []
    for i in range(n):
        label = i % 2 == 0
        if label:
            rec = _record(
                outcome="fail",
                duration=rng.uniform(60, 90),
                observed={"u1": rng.uniform(0.85, 0.99), "u2": rng.uniform(0.8, 0.95)},
                context={"historical_failure_rate": rng.uniform(0.0, 0.3)},
                case_id=f"case-{i}",
            )
        else:
            rec = _record(
                outcome="pass",
                duration=rng.uniform(5, 15),
                observed={"u1": rng.uniform(0.0, 0.05), "u2": rng.uniform(0.0, 0.05)},
                context={"historical_failure_rate": rng.uniform(0.0, 0.3)},
                case_id=f"case-{i}",
            )
        dataset.append((rec, label))
    return dataset


def test_train_on_separable_data_reaches_full_precision():
    model, report = train_model(_separable_dataset(), [0.001, 0.01], seed=1)
    assert isinstance(model, LinearModel)
    assert report.folds == 5
    assert report.split == (0.70, 0.20, 0.10)
    assert report.test_precision == 1.0
    assert report.test_recall == 1.0
    assert report.false_negative_rate == 0.0


def test_train_rejects_single_class():
    dataset = [(rec, True) for rec, lab in _separable_dataset() if lab]
    dataset = dataset * 2  # keep >= 50 records
    with pytest.raises(DomainError):
        train_model(dataset[:60], [0.01], seed=0)


def test_train_rejects_small_dataset():
    with pytest.raises(DomainError):
        train_model(_separable_dataset()[:30], [0.01], seed=0)


def test_train_rejects_empty_grid():
    with pytest.raises(ConfigError):
        train_model(_separable_dataset(), [], seed=0)


def test_train_rejects_pass_labeled_defect():
    dataset = _separable_dataset()
    bad = (_record(outcome="pass", case_id="corrupt"), True)
    with pytest.raises(DomainError):
        train_model(dataset + [bad], [0.01], seed=0)


def test_split_is_a_partition():
    from veriflow.validation import _stratified_indices

    labels = [i % 3 == 0 for i in range(83)]
    rng = random.Random(5)
    train, val, test = _stratified_indices(labels, (0.70, 0.20, 0.10), rng)
    combined = sorted(train + val + test)
    assert combined == list(range(83))
    assert abs(len(train) - 0.70 * 83) <= 2
    assert abs(len(val) - 0.20 * 83) <= 2
    assert abs(len(test) - 0.10 * 83) <= 2


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 6))
    y = (rng.random(40) > 0.5).astype(float)
    lam = 0.5
    for _ in range(20):
        w = rng.normal(size=6)
        b = float(rng.normal())
        _, grad_w, grad_b = loss_and_gradient(X, y, w, b, lam)
        eps = 1e-6
        for j in range(6):
            bump = np.zeros(6)
            bump[j] = eps
            hi, _, _ = loss_and_gradient(X, y, w + bump, b, lam)
            lo, _, _ = loss_and_gradient(X, y, w - bump, b, lam)
            numeric = (hi - lo) / (2 * eps)
            assert abs(numeric - grad_w[j]) <= 1e-4 * max(1.0, abs(numeric))
        hi, _, _ = loss_and_gradient(X, y, w, b + eps, lam)
        lo, _, _ = loss_and_gradient(X, y, w, b - eps, lam)
        numeric = (hi - lo) / (2 * eps)
        assert abs(numeric - grad_b) <= 1e-4 * max(1.0, abs(numeric))


def test_predict_sigmoid_identities():
    schema = ("signal_mean",)
    zero = LinearModel(feature_schema=schema, weights=np.zeros(1), bias=0.0, regularization=0.0)
    assert predict(zero, _record(observed={"u1": 0.5})) == pytest.approx(0.5)

    ln3 = LinearModel(feature_schema=schema, weights=np.zeros(1), bias=math.log(3), regularization=0.0)
    assert predict(ln3, _record()) == pytest.approx(0.75)

    saturated = LinearModel(feature_schema=schema, weights=np.zeros(1), bias=50.0, regularization=0.0)
    assert predict(saturated, _record()) > 0.999


def test_predict_missing_feature_defaults_to_zero():
    model = LinearModel(
        feature_schema=("nonexistent_context_key",),
        weights=np.array([2.0]),
        bias=0.0,
        regularization=0.0,
    )
    assert predict(model, _record()) == pytest.approx(0.5)


def test_model_json_roundtrip():
    model, _ = train_model(_separable_dataset(), [0.01], seed=2)
    again = LinearModel.from_dict(model.to_dict())
    rec = _record()
    assert predict(again, rec) == pytest.approx(predict(model, rec))


# -- ensemble -----------------------------------------------------------------


def test_ensemble_confidence_formula():
    v = ensemble_verdict("c", 1.0, 0.9, weights=(0.4, 0.6))
    assert v.confidence == pytest.approx(0.94)
    assert v.verdict == "true_defect"


def test_ensemble_rule_only_weights():
    v = ensemble_verdict("c", 0.7, 0.1, weights=(1.0, 0.0))
    assert v.confidence == pytest.approx(0.7)


def test_ensemble_false_alarm():
    v = ensemble_verdict("c", 0.2, 0.3, weights=(0.5, 0.5), threshold=0.5)
    assert v.verdict == "false_alarm"
    assert v.confidence == pytest.approx(0.25)


def test_ensemble_bad_weights():
    with pytest.raises(ConfigError):
        ensemble_verdict("c", 0.5, 0.5, weights=(0.5, 0.6))


def test_ensemble_confidence_recomputable():
    v = ensemble_verdict("c", 0.37, 0.81)
    assert v.confidence == pytest.approx(v.vote_weights[0] * v.rule_score + v.vote_weights[1] * v.model_score)


# -- classifier evaluation ------------------------------------------------------


def _verdicts(pairs):
    return [ensemble_verdict(cid, 1.0 if hit else 0.0, 1.0 if hit else 0.0) for cid, hit in pairs]


def test_evaluate_classifier_perfect():
    verdicts = _verdicts([("a", True), ("b", False)])
    precision, recall, fnr = evaluate_classifier(verdicts, {"a": True, "b": False})
    assert (precision, recall, fnr) == (1.0, 1.0, 0.0)


def test_evaluate_classifier_confusion_counts():
    # TP=8, FP=2, FN=2
    verdicts = _verdicts(
        [(f"tp{i}", True) for i in range(8)]
        + [(f"fp{i}", True) for i in range(2)]
        + [(f"fn{i}", False) for i in range(2)]
    )
    gold = {f"tp{i}": True for i in range(8)}
    gold |= {f"fp{i}": False for i in range(2)}
    gold |= {f"fn{i}": True for i in range(2)}
    precision, recall, fnr = evaluate_classifier(verdicts, gold)
    assert precision == pytest.approx(0.8)
    assert recall == pytest.approx(0.8)
    assert fnr == pytest.approx(0.2)


def test_evaluate_classifier_degenerate_negative_predictor():
    verdicts = _verdicts([("a", False), ("b", False)])
    _, recall, fnr = evaluate_classifier(verdicts, {"a": True, "b": True})
    assert recall == 0.0
    assert fnr == 1.0


def test_evaluate_classifier_missing_gold():
    with pytest.raises(DomainError):
        evaluate_classifier(_verdicts([("a", True)]), {})


# -- ensemble benchmark: weighted voting lowers false negatives -----------------


def _benchmark(seed=17, n=500):
    """Two defect families: rule-visible (hot signals, short runs) and
    model-visible (long runs, cold signals); plus clean records."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        roll = rng.random()
        if roll < 0.2:  # rule-visible defects
            rec = ExecutionRecord(
                case_id=f"r{i}",
                outcome="fail",
                observed={"u1": rng.uniform(0.9, 0.99), "u2": rng.uniform(0.85, 0.99)},
                duration=rng.uniform(5, 12),
                context={
                    "expected_mismatch": 2,
                    "assertion_failures": 2,
                    "mismatch_ratio": 1.0,
                    "anomaly": rng.uniform(0.8, 0.95),
                    "corroboration": 3,
                    "historical_failure_rate": rng.uniform(0.0, 0.2),
                },
            )
            records.append((rec, True))
        elif roll < 0.4:  # model-visible defects
            rec = ExecutionRecord(
                case_id=f"m{i}",
                outcome="fail",
                observed={"u1": rng.uniform(0.1, 0.3), "u2": rng.uniform(0.1, 0.3)},
                duration=rng.uniform(70, 95),
                context={
                    "expected_mismatch": 0,
                    "assertion_failures": 1,
                    "mismatch_ratio": 0.0,
                    "anomaly": rng.uniform(0.2, 0.4),
                    "corroboration": 1,
                    "historical_failure_rate": rng.uniform(0.5, 0.9),
                },
            )
            records.append((rec, True))
        else:  # clean
            rec = ExecutionRecord(
                case_id=f"p{i}",
                outcome="pass" if rng.random() < 0.9 else "fail",
                observed={"u1": rng.uniform(0.0, 0.1), "u2": rng.uniform(0.0, 0.1)},
                duration=rng.uniform(5, 20),
                context={
                    "expected_mismatch": 0,
                    "assertion_failures": 0,
                    "mismatch_ratio": 0.0,
                    "anomaly": rng.uniform(0.0, 0.2),
                    "corroboration": 0,
                    "historical_failure_rate": rng.uniform(0.0, 0.3),
                },
            )
            records.append((rec, False))
    return records


def test_ensemble_reduces_false_negatives_vs_either_alone():
    benchmark = _benchmark()
    rules = load_rule_pack(data_text("rules_default.json"))
    train = benchmark[: len(benchmark) // 2]
    holdout = benchmark[len(benchmark) // 2 :]
    model, _ = train_model(train, [0.001, 0.01, 0.1], seed=3)

    gold = {rec.case_id: lab for rec, lab in holdout}
    rule_verdicts, model_verdicts, ensemble_verdicts = [], [], []
    for rec, _lab in holdout:
        rs = rule_score(rules, rec)
        ms = predict(model, rec)
        rule_verdicts.append(ensemble_verdict(rec.case_id, rs, ms, weights=(1.0, 0.0)))
        model_verdicts.append(ensemble_verdict(rec.case_id, rs, ms, weights=(0.0, 1.0)))
        ensemble_verdicts.append(ensemble_verdict(rec.case_id, rs, ms, weights=(0.4, 0.6)))

    _, _, fnr_rules = evaluate_classifier(rule_verdicts, gold)
    _, _, fnr_model = evaluate_classifier(model_verdicts, gold)
    _, _, fnr_ens = evaluate_classifier(ensemble_verdicts, gold)
    assert fnr_ens <= fnr_model
    assert fnr_ens <= fnr_rules
    assert fnr_rules > 0 or fnr_model > 0  # the comparison is non-vacuous


def test_tune_vote_weights_returns_valid_pair():
    w = tune_vote_weights([0.9, 0.1, 0.8], [0.2, 0.1, 0.9], [True, False, True])
    assert w[0] + w[1] == pytest.approx(1.0)


def test_feature_extraction_default_schema():
    rec = _record(context={"historical_failure_rate": 0.25})
    x = extract_features(rec, DEFAULT_FEATURES, {"duration": (50.0, 10.0)})
    assert list(x) == pytest.approx([1.0, 0.0, 0.0, 2.0, 0.25, 0.65])
