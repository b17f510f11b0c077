from __future__ import annotations

import json
from pathlib import Path

import pytest

from veriflow.generation import TestCase, load_sut_model
from veriflow.ingest import parse_requirements
from veriflow.resources import data_text

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def bank_sut():
    return load_sut_model(data_text("bank.json"))


@pytest.fixture(scope="session")
def bank_reqs():
    return parse_requirements(data_text("requirements_bank.txt"))


@pytest.fixture(scope="session")
def gold_corpus_text():
    return data_text("gold_requirements.txt")


@pytest.fixture(scope="session")
def gold_corpus_records():
    from veriflow.ingest import records_from_json

    return records_from_json(data_text("gold_corpus.json"))


@pytest.fixture(scope="session")
def mcts_fixture():
    from veriflow.simulator import FaultySut, InjectedDefect

    raw = json.loads(data_text("mcts_pool.json"))
    sut = load_sut_model(raw["sut"])
    cases = [TestCase.from_dict(c) for c in raw["cases"]]
    defects = tuple(InjectedDefect(**d) for d in raw["training_defects"])
    return {
        "sut": sut,
        "cases": cases,
        "fsut": FaultySut(model=sut, defects=defects),
        "budget": raw["budget"],
    }
