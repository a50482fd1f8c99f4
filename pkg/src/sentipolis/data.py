"""Access to the data files shipped inside the package."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .enrichment import AnchorSet, load_anchors
from .engine import AgentProfile, load_personas


def data_path(name: str) -> Path:
    """Filesystem path of a packaged data file."""
    return Path(str(resources.files("sentipolis").joinpath("data", name)))


def default_anchor_set(k: int = 3) -> AnchorSet:
    return load_anchors(data_path("anchors_synthetic.csv"), k=k)


def default_personas() -> list[AgentProfile]:
    return load_personas(data_path("personas.jsonl"))


def default_rubric() -> str:
    return data_path("judge_rubric.txt").read_text(encoding="utf-8")
