from __future__ import annotations

import pytest

from veriflow.errors import ConfigError, DomainError, ParseError
from veriflow.ingest import (
    AugmentationConfig,
    Condition,
    RequirementRecord,
    augment,
    evaluate_extraction,
    parse_defect_log,
    parse_requirements,
    records_from_json,
    records_to_json,
)


def test_parse_single_requirement():
    recs = parse_requirements("[R1] The user shall transfer funds when balance >= 100.")
    assert len(recs) == 1
    r = recs[0]
    assert r.id == "R1"
    assert r.actor == "user"
    assert r.action == "transfer"
    assert r.object == "funds"
    assert r.conditions == [Condition(subject="balance", comparator="ge", value=100)]
    assert r.priority == "medium"
    assert not r.unparsed


def test_parse_empty_document():
    assert parse_requirements("") == []


def test_unmatched_line_is_flagged_not_dropped():
    recs = parse_requirements("Lorem ipsum dolor.")
    assert len(recs) == 1
    assert recs[0].unparsed
    assert recs[0].actor is None
    assert recs[0].action is None
    assert recs[0].object is None
    assert recs[0].conditions == []


def test_malformed_id_tag_names_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_requirements("ok line without tag\n[bad id!] The user shall act.")


def test_duplicate_id_rejected():
    doc = "[R1] The user shall pay fees.\n[R1] The user shall pay fees."
    with pytest.raises(ParseError, match="duplicate"):
        parse_requirements(doc)


def test_untagged_lines_get_line_ids():
    recs = parse_requirements("The user shall pay fees.\n\nThe admin must lock accounts.")
    assert [r.id for r in recs] == ["L1", "L3"]


def test_priority_follows_modal():
    recs = parse_requirements(
        "[A] The user must act.\n[B] The user shall act.\n[C] The user should act."
    )
    assert [r.priority for r in recs] == ["high", "medium", "low"]


def test_expected_outcome_clause():
    recs = parse_requirements("[R1] The system shall mask identifiers so that privacy is preserved.")
    assert recs[0].expected_outcome == "privacy is preserved"
    assert recs[0].object == "identifiers"


def test_multiple_conditions_split_on_and():
    recs = parse_requirements("[R1] The bank shall waive fees when balance >= 10000 and tenure >= 5.")
    assert recs[0].conditions == [
        Condition("balance", "ge", 10000),
        Condition("tenure", "ge", 5),
    ]


def test_roundtrip_through_json():
    recs = parse_requirements(
        "[R1] The user shall transfer funds when balance >= 100.\n"
        "[R2] The gateway must retry requests when upstream is absent."
    )
    again = records_from_json(records_to_json(recs))
    assert again == recs


def test_condition_numeric_comparator_requires_number():
    with pytest.raises(DomainError):
        Condition(subject="x", comparator="ge", value="high")


def test_parser_survives_hostile_lines():
    # odd whitespace, unicode, huge numbers, and half-formed comparators must
    # parse or flag, never crash or drop a line
    doc = "\n".join(
        [
            "\t[U1] The user shall transfer funds when balance >= 99999999999999.  ",
            "[U2] Le système must validate paiements when montant > 100.",
            "[U3] The user shall transfer when >= 100.",  # comparator without a subject
            "[U4] shall",
            "???",
        ]
    )
    records = parse_requirements(doc)
    assert len(records) == 5
    by_id = {r.id: r for r in records}
    assert by_id["U1"].conditions[0].value == 99999999999999
    assert by_id["U2"].action == "validate"
    assert by_id["U3"].conditions == []  # dropped: no subject to anchor it
    assert by_id["U4"].unparsed
    assert by_id["L5"].unparsed


# -- defect log ---------------------------------------------------------------


def test_parse_defect_log_happy_path():
    recs = parse_defect_log("D7|payments|critical|overflow on amount|R1")
    assert len(recs) == 1
    assert recs[0].id == "D7"
    assert recs[0].severity == "critical"
    assert recs[0].requirement_ref == "R1"


def test_parse_defect_log_empty():
    assert parse_defect_log("") == []


def test_parse_defect_log_unknown_severity():
    with pytest.raises(ParseError, match="severity"):
        parse_defect_log("D8|payments|catastrophic|x")


def test_parse_defect_log_field_count():
    with pytest.raises(ParseError, match="line 1"):
        parse_defect_log("D8|payments|minor")


# -- augmentation -------------------------------------------------------------


def _record_with_conditions():
    return parse_requirements(
        "[R1] The bank shall waive fees when balance >= 10000 and tenure >= 5."
    )[0]


def test_identity_augmentation_config():
    recs = [_record_with_conditions()]
    cfg = AugmentationConfig(noise_rate=0, permutation_enabled=False, variants_per_record=0, seed=1)
    assert augment(recs, cfg) == recs


def test_augment_deterministic():
    recs = parse_requirements(
        "[R1] The bank shall waive fees when balance >= 10000 and tenure >= 5.\n"
        "[R2] The clerk shall refund payments when amount <= 500."
    )
    cfg = AugmentationConfig(noise_rate=0.1, permutation_enabled=True, variants_per_record=3, seed=9)
    assert augment(recs, cfg) == augment(recs, cfg)


def test_permutation_variant_reorders_two_conditions():
    rec = _record_with_conditions()
    cfg = AugmentationConfig(noise_rate=0, permutation_enabled=True, variants_per_record=1, seed=4)
    out = augment([rec], cfg)
    assert len(out) == 2
    variant = out[1]
    assert variant.lineage == "R1"
    assert variant.id == "R1-v1"
    assert variant.conditions == [rec.conditions[1], rec.conditions[0]]


def test_noise_perturbs_numeric_values_and_respects_precision():
    rec = parse_requirements("[R1] The scheduler shall defer tasks when load is above 0.9.")[0]
    cfg = AugmentationConfig(noise_rate=0.1, permutation_enabled=False, variants_per_record=1, seed=3)
    out = augment([rec], cfg)
    value = out[1].conditions[0].value
    assert value in (0.8, 1.0)  # 0.9 +/- 10%, rounded to the source's 1 decimal
    assert isinstance(value, float)

    int_rec = parse_requirements("[R2] The user shall transfer funds when balance >= 100.")[0]
    out = augment([int_rec], cfg)
    assert out[1].conditions[0].value in (90, 110)
    assert isinstance(out[1].conditions[0].value, int)


def test_augment_size_bound():
    recs = parse_requirements(
        "[R1] The bank shall waive fees when balance >= 10000 and tenure >= 5.\n"
        "[R2] The analyst shall generate reports.\n"  # no conditions: not augmentable
    )
    cfg = AugmentationConfig(noise_rate=0.2, permutation_enabled=True, variants_per_record=2, seed=0)
    out = augment(recs, cfg)
    assert len(recs) <= len(out) <= len(recs) * 3
    assert out[: len(recs)] == recs  # originals first


def test_augment_exact_size_when_all_augmentable():
    recs = parse_requirements(
        "[R1] The bank shall waive fees when balance >= 10000 and tenure >= 5.\n"
        "[R2] The monitor should page engineers when error rate > 0.05 and traffic > 100.\n"
    )
    cfg = AugmentationConfig(noise_rate=0.1, permutation_enabled=True, variants_per_record=3, seed=2)
    out = augment(recs, cfg)
    assert len(out) == len(recs) * (1 + cfg.variants_per_record)
    assert all(v.lineage for v in out[len(recs) :])


def test_augment_bad_noise_rate():
    with pytest.raises(ConfigError):
        AugmentationConfig(noise_rate=1.5)


# -- extraction scoring -------------------------------------------------------


def test_extraction_identity_is_all_ones(gold_corpus_records):
    score = evaluate_extraction(gold_corpus_records, gold_corpus_records)
    assert score.precision == 1.0
    assert score.recall == 1.0
    for p, r in score.per_entity.values():
        assert (p, r) == (1.0, 1.0)


def test_extraction_three_of_four_with_one_wrong():
    gold = [
        RequirementRecord(
            id="G1", raw_text="", actor="user", action="transfer", object="funds",
            conditions=[Condition("balance", "ge", 100)],
        )
    ]
    predicted = [
        RequirementRecord(
            id="G1", raw_text="", actor="user", action="transfer", object="money",
            conditions=[Condition("balance", "ge", 100)],
        )
    ]
    score = evaluate_extraction(predicted, gold)
    assert score.precision == pytest.approx(0.75)
    assert score.recall == pytest.approx(0.75)


def test_extraction_empty_prediction_has_zero_recall():
    gold = [
        RequirementRecord(
            id="G1", raw_text="", actor="user", action="transfer", object="funds",
            conditions=[Condition("balance", "ge", 100)],
        )
    ]
    predicted = [RequirementRecord(id="G1", raw_text="", unparsed=True)]
    score = evaluate_extraction(predicted, gold)
    assert score.recall == 0.0


def test_extraction_unknown_predicted_id_rejected(gold_corpus_records):
    rogue = RequirementRecord(id="nope", raw_text="", unparsed=True)
    with pytest.raises(DomainError):
        evaluate_extraction([rogue], gold_corpus_records)


def test_gold_corpus_recall_on_critical_entities(gold_corpus_text, gold_corpus_records):
    predicted = parse_requirements(gold_corpus_text)
    score = evaluate_extraction(predicted, gold_corpus_records)
    assert len(gold_corpus_records) >= 40
    action_p, action_r = score.per_entity["action"]
    cond_p, cond_r = score.per_entity["condition"]
    assert action_r >= 0.95
    assert cond_r >= 0.95
    assert score.recall >= 0.95
