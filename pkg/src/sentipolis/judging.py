"""Transcript scoring on six dimensions by pluggable judge backends, plus
inter-judge rank agreement via Spearman correlation."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .gateway import ChatRequest

logger = logging.getLogger(__name__)

DIMENSIONS = ("com", "emp", "app", "con", "bel", "soc")
DIMENSION_RANGES: dict[str, tuple[float, float]] = {
    "com": (0.0, 10.0),
    "emp": (0.0, 10.0),
    "app": (0.0, 10.0),
    "con": (0.0, 10.0),
    "bel": (0.0, 10.0),
    "soc": (-10.0, 0.0),
}

DEFAULT_RUBRIC = """You are scoring one simulated conversation transcript.
Rate the agents' behavior on six dimensions:
- Communication (COM), 0 to 10: clear, responsive exchange with sensible turn-taking.
- Empathy (EMP), 0 to 10: noticing the partner's feelings and reacting to them in context.
- Emotional Appropriateness (APP), 0 to 10: the emotion shown fits the situation in kind and intensity.
- Emotional Continuity (CON), 0 to 10: the emotional stance stays coherent over time, including across meetings.
- Believability (BEL), 0 to 10: natural, human-like, persona-consistent behavior.
- Social Rules (SOC), -10 to 0: penalty for breaking norms, boundaries, or rules (0 means no violations).
Reply with exactly one line in the form:
COM=<value> EMP=<value> APP=<value> CON=<value> BEL=<value> SOC=<value>
"""


class ScoringError(Exception):
    """A judge reply could not be turned into a complete scorecard."""


@dataclass(frozen=True)
class JudgeScorecard:
    """Six-dimension scores for one transcript from one judge."""

    transcript_id: str
    judge_id: str
    com: float
    emp: float
    app: float
    con: float
    bel: float
    soc: float

    def score(self, dimension: str) -> float:
        return getattr(self, dimension)


_SCORE_RE = re.compile(r"\b(?P<key>com|emp|app|con|bel|soc)\s*=\s*(?P<value>[+-]?\d+(?:\.\d+)?)", re.IGNORECASE)


def parse_scorecard_reply(text: str, transcript_id: str, judge_id: str) -> JudgeScorecard:
    """Parse KEY=value pairs; out-of-range values are clamped with a warning.

    Raises ScoringError when any of the six dimensions is missing.
    """
    values: dict[str, float] = {}
    for m in _SCORE_RE.finditer(text):
        key = m["key"].lower()
        if key not in values:
            values[key] = float(m["value"])
    missing = [d for d in DIMENSIONS if d not in values]
    if missing:
        raise ScoringError(f"judge reply missing dimensions {missing}: {text[:120]!r}")
    for dim in DIMENSIONS:
        lo, hi = DIMENSION_RANGES[dim]
        v = values[dim]
        if not lo <= v <= hi:
            clamped = max(lo, min(hi, v))
            logger.warning("%s=%s out of [%s, %s]; clamped to %s", dim, v, lo, hi, clamped)
            values[dim] = clamped
    return JudgeScorecard(transcript_id, judge_id, **values)


def judge_transcript(
    transcript_text: str,
    transcript_id: str,
    gateway,
    judge_id: str,
    rubric: str = DEFAULT_RUBRIC,
) -> JudgeScorecard:
    """One gateway call scoring one transcript under one judge identity."""
    reply = gateway.send(
        ChatRequest(
            system_text=rubric,
            user_text=transcript_text,
            temperature=0.0,
            max_tokens=200,
            tag=f"judge:{judge_id}",
        )
    )
    return parse_scorecard_reply(reply.text, transcript_id, judge_id)


@dataclass(frozen=True)
class RankSeries:
    """Scores for a set of items under one judge and one dimension."""

    items: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ids = [item_id for item_id, _ in self.items]
        if len(ids) != len(set(ids)):
            raise ValueError("item ids must be unique")

    def as_dict(self) -> dict[str, float]:
        return dict(self.items)


def _average_ranks(values: Sequence[float]) -> list[float]:
    """1-based fractional ranks; tied values share their average rank."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: RankSeries, y: RankSeries) -> float | None:
    """Tie-safe Spearman correlation: Pearson correlation of average ranks.

    Returns None (undefined) when either series has zero rank variance.
    """
    xs = x.as_dict()
    ys = y.as_dict()
    if set(xs) != set(ys):
        raise ValueError("rank series cover different item sets")
    if len(xs) < 2:
        raise ValueError("need at least 2 items")
    ids = sorted(xs)
    rx = _average_ranks([xs[i] for i in ids])
    ry = _average_ranks([ys[i] for i in ids])
    n = len(ids)
    mean_x = sum(rx) / n
    mean_y = sum(ry) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(rx, ry))
    var_x = sum((a - mean_x) ** 2 for a in rx)
    var_y = sum((b - mean_y) ** 2 for b in ry)
    if var_x == 0.0 or var_y == 0.0:
        logger.info("spearman undefined: zero rank variance")
        return None
    return cov / math.sqrt(var_x * var_y)


@dataclass
class JudgeAgreementReport:
    """Pairwise mean correlations (per dimension first, then averaged)."""

    judges: tuple[str, ...]
    pair_means: dict[tuple[str, str], float | None]
    overall_mean: float | None


def inter_judge_report(cards: Sequence[JudgeScorecard]) -> JudgeAgreementReport:
    """Correlate each judge pair per dimension, then average over dimensions.

    Transcripts missing for either judge of a pair are excluded pairwise;
    dimensions with undefined correlation (constant scores) are skipped.
    """
    by_judge: dict[str, dict[str, JudgeScorecard]] = {}
    for card in cards:
        by_judge.setdefault(card.judge_id, {})[card.transcript_id] = card
    judges = tuple(sorted(by_judge))
    if len(judges) < 2:
        raise ValueError("need at least 2 judges")
    pair_means: dict[tuple[str, str], float | None] = {}
    for i, j1 in enumerate(judges):
        for j2 in judges[i + 1 :]:
            shared = sorted(set(by_judge[j1]) & set(by_judge[j2]))
            if len(shared) < 2:
                logger.warning("pair (%s, %s) has %d shared transcripts; reported missing", j1, j2, len(shared))
                pair_means[(j1, j2)] = None
                continue
            rhos = []
            for dim in DIMENSIONS:
                rho = spearman(
                    RankSeries(tuple((t, by_judge[j1][t].score(dim)) for t in shared)),
                    RankSeries(tuple((t, by_judge[j2][t].score(dim)) for t in shared)),
                )
                if rho is not None:
                    rhos.append(rho)
            pair_means[(j1, j2)] = sum(rhos) / len(rhos) if rhos else None
    defined = [v for v in pair_means.values() if v is not None]
    overall = sum(defined) / len(defined) if defined else None
    return JudgeAgreementReport(judges, pair_means, overall)


def write_scorecards_csv(cards: Sequence[JudgeScorecard], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("transcript_id,judge_id,com,emp,app,con,bel,soc\n")
        for c in cards:
            fh.write(
                f"{c.transcript_id},{c.judge_id},{c.com:.6f},{c.emp:.6f},"
                f"{c.app:.6f},{c.con:.6f},{c.bel:.6f},{c.soc:.6f}\n"
            )


def write_report_csv(report: JudgeAgreementReport, path: str | Path) -> None:
    """Symmetric matrix of pairwise mean correlations plus the overall mean."""

    def lookup(j1: str, j2: str) -> float | None:
        if j1 == j2:
            return None
        key = (j1, j2) if (j1, j2) in report.pair_means else (j2, j1)
        return report.pair_means.get(key)

    def cell(v: float | None) -> str:
        return "" if v is None else f"{v:.6f}"

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("judge," + ",".join(report.judges) + "\n")
        for j1 in report.judges:
            fh.write(j1 + "," + ",".join(cell(lookup(j1, j2)) for j2 in report.judges) + "\n")
        fh.write(f"overall_mean,{cell(report.overall_mean)}\n")
