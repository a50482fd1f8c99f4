"""Canned mock scripts for offline runs.

The wildcard entries answer every call of their tag, so one small script can
drive a full-length simulation deterministically.
"""

from __future__ import annotations

from pathlib import Path

from .gateway import WILDCARD_ORDINAL, write_script

ScriptEntry = tuple[str, int | str, str]


def demo_script_entries(
    round_delta: str = "ALL: (+0.04, +0.02, +0.01)",
    probe: str = "+0.25",
    chat_poignancy: str = "5",
    initiate: str = "yes",
) -> list[ScriptEntry]:
    """A generic always-talk script with mildly positive affect updates."""
    return [
        ("initiate", WILDCARD_ORDINAL, initiate),
        ("enrich", WILDCARD_ORDINAL, "A steady, alert mood colors everything they say."),
        ("utterance", WILDCARD_ORDINAL, "Busy day at the shop; any news from town hall?"),
        ("round_delta", WILDCARD_ORDINAL, round_delta),
        ("chat_summary", WILDCARD_ORDINAL, "Two neighbors traded news about the town and their work."),
        ("chat_poignancy", WILDCARD_ORDINAL, chat_poignancy),
        ("probe", WILDCARD_ORDINAL, probe),
        (
            "reflect_focus",
            WILDCARD_ORDINAL,
            "1. What changed around the shop this week?\n"
            "2. Who can be counted on if supplies run short?\n"
            "3. How is the election mood shifting?",
        ),
        (
            "reflect_insights",
            WILDCARD_ORDINAL,
            "- Neighbors keep each other informed when things get uncertain. (poignancy: 4)",
        ),
        (
            "reflect_chat_extract",
            WILDCARD_ORDINAL,
            "- Check in with the same neighbor again tomorrow. (poignancy: 3)",
        ),
        ("reflect_delta", WILDCARD_ORDINAL, "ALL: (-0.02, +0.01, +0.01)"),
    ]


def quiet_script_entries() -> list[ScriptEntry]:
    """No conversations at all: every initiation check answers no."""
    return [("initiate", WILDCARD_ORDINAL, "no")]


def write_demo_script(path: str | Path, entries: list[ScriptEntry] | None = None) -> Path:
    path = Path(path)
    write_script(entries if entries is not None else demo_script_entries(), path)
    return path
