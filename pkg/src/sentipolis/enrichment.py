"""Grounding continuous affect in language: nearest human-anchored emotion
labels via exact KNN, and the prompt that expands them into an emotion
paragraph."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .emotion import PadState

DEFAULT_K = 3
RAW_SCALE_MAX = 7.0
RAW_SCALE_DIRECTIVE = "scale=raw07"
PROMPT_VERSION = "enrich-v1"


class EmotionLabel(str, Enum):
    ANGER = "anger"
    SADNESS = "sadness"
    HAPPINESS = "happiness"
    SURPRISE = "surprise"
    FEAR = "fear"
    DISGUST = "disgust"
    CONTEMPT = "contempt"
    NEUTRAL = "neutral"
    # Merged form of the raw annotations "Other" and "No Agreement".
    VAGUE = "vague"


_LABEL_ALIASES = {
    "other": EmotionLabel.VAGUE,
    "no agreement": EmotionLabel.VAGUE,
    "no_agreement": EmotionLabel.VAGUE,
}


def parse_label(text: str) -> EmotionLabel:
    """Parse a label name, case-insensitively, merging the ambiguous aliases."""
    key = text.strip().lower()
    if key in _LABEL_ALIASES:
        return _LABEL_ALIASES[key]
    try:
        return EmotionLabel(key)
    except ValueError:
        raise ValueError(f"unknown emotion label {text!r}") from None


def normalize_raw(raw: float) -> float:
    """Map an annotation value on the 0-7 scale onto [-1, 1] (affine)."""
    if not 0.0 <= raw <= RAW_SCALE_MAX:
        raise ValueError(f"raw PAD value {raw} outside [0, {RAW_SCALE_MAX}]")
    return raw / 3.5 - 1.0


@dataclass(frozen=True)
class AnchorPoint:
    """One human reference point: an emotion label at a normalized PAD coordinate."""

    label: EmotionLabel
    pad: PadState


@dataclass
class AnchorSet:
    """Ordered anchor list. Row order is load order and breaks exact distance ties."""

    points: list[AnchorPoint]
    k: int = DEFAULT_K
    _coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        self._coords = np.array(
            [pt.pad.as_tuple() for pt in self.points], dtype=float
        ).reshape(len(self.points), 3)

    def __len__(self) -> int:
        return len(self.points)


def load_anchors(path: str | Path, k: int = DEFAULT_K) -> AnchorSet:
    """Load an anchor CSV (header ``label,p,a,d``).

    A leading ``# scale=raw07`` directive marks values on the 0-7 annotation
    scale; they are normalized into [-1, 1] on load. Errors name the
    offending line.
    """
    path = Path(path)
    raw_scale = False
    header_seen = False
    points: list[AnchorPoint] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.lstrip("#").strip().lower() == RAW_SCALE_DIRECTIVE:
                    raw_scale = True
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                got = [f.strip().lower() for f in fields]
                if got != ["label", "p", "a", "d"]:
                    raise ValueError(f"{path}:{lineno}: expected header 'label,p,a,d', got {line!r}")
                header_seen = True
                continue
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            try:
                label = parse_label(fields[0])
                values = [float(f) for f in fields[1:]]
                if raw_scale:
                    values = [normalize_raw(v) for v in values]
                pad = PadState(*values)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            points.append(AnchorPoint(label, pad))
    if not header_seen:
        raise ValueError(f"{path}: missing 'label,p,a,d' header")
    return AnchorSet(points, k=k)


def knn_labels(anchors: AnchorSet, query: PadState, k: int | None = None) -> list[EmotionLabel]:
    """Labels of the k nearest anchors by Euclidean distance, nearest first.

    All k labels are returned, no vote. Exact ties keep anchor file order.
    """
    kk = anchors.k if k is None else k
    if kk > len(anchors.points):
        raise ValueError(f"k={kk} exceeds anchor count {len(anchors.points)}")
    if kk < 1:
        raise ValueError(f"k must be >= 1, got {kk}")
    d2 = np.sum((anchors._coords - np.array(query.as_tuple())) ** 2, axis=1)
    nearest = np.argsort(d2, kind="stable")[:kk]
    return [anchors.points[i].label for i in nearest]


@dataclass(frozen=True)
class EnrichmentRequest:
    """Inputs for one emotion-paragraph prompt."""

    labels: tuple[EmotionLabel, ...]
    profile_text: str
    recent_memory_texts: tuple[str, ...]
    pad: PadState


def build_enrichment_prompt(req: EnrichmentRequest) -> str:
    """Deterministic prompt asking for a vivid emotion paragraph.

    Embeds, in fixed order: the template version tag, the retrieved labels
    (nearest first), the numeric PAD triple, the agent profile, and each
    recent memory (or "none").
    """
    if not req.profile_text:
        raise ValueError("profile_text must be non-empty")
    labels = ", ".join(label.value for label in req.labels)
    pad = "({:.2f}, {:.2f}, {:.2f})".format(*req.pad.as_tuple())
    if req.recent_memory_texts:
        memories = "\n".join(f"- {text}" for text in req.recent_memory_texts)
    else:
        memories = "none"
    return (
        f"[template {PROMPT_VERSION}]\n"
        "Write one vivid paragraph, in the third person, describing how this agent feels right now.\n"
        f"Nearest emotion labels, closest first: {labels}\n"
        f"Current PAD coordinates (pleasure, arousal, dominance): {pad}\n"
        "Agent profile:\n"
        f"{req.profile_text}\n"
        "Recent memories:\n"
        f"{memories}\n"
        "Blend the labels with the profile and the memories; do not quote the numbers back."
    )
