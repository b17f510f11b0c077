"""Access to packaged fixtures (SUT models, corpora, policy packs, scenarios)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import NotFoundError


def data_text(name: str) -> str:
    base = resources.files("veriflow") / "data"
    target = base / name
    if not target.is_file():
        raise NotFoundError(f"no packaged fixture named {name!r}")
    return target.read_text(encoding="utf-8")


def scenario_text(name: str) -> str:
    base = resources.files("veriflow") / "data" / "scenarios"
    target = base / f"{name}.json"
    if not target.is_file():
        raise NotFoundError(f"unknown scenario {name!r}")
    return target.read_text(encoding="utf-8")


def data_dir_default() -> Path:
    import os

    return Path(os.environ.get("VERIFLOW_DATA_DIR", Path.cwd() / "veriflow-data"))
