"""Emotion-tagged memory stream: scored retrieval, poignancy-driven
reflection triggering, and the reflection pipeline."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .emotion import DEFAULT_DELTA_CAP, PadDelta, PadState, ZERO_DELTA
from .gateway import ChatRequest, DeltaParseError, parse_delta_reply

logger = logging.getLogger(__name__)

EMBEDDING_DIM = 64
POIGNANCY_MIN = 1
POIGNANCY_MAX = 10
DEFAULT_REFLECTION_THRESHOLD = 150
DEFAULT_RETRIEVAL_LIMIT = 30
FOCUS_QUESTION_CAP = 3
RECENT_WINDOW = 20


class MemoryKind(str, Enum):
    EVENT = "event"
    CHAT = "chat"
    THOUGHT = "thought"


def hashed_embedding(text: str, dim: int = EMBEDDING_DIM) -> np.ndarray:
    """Deterministic bag-of-words embedding: tokens hash into signed buckets,
    L2-normalized. Stable across processes (no PYTHONHASHSEED dependence)."""
    vec = np.zeros(dim)
    for token in re.findall(r"[a-z0-9']+", text.lower()):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if (h >> 32) & 1 else -1.0
        vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


@dataclass
class MemoryNode:
    """One event / chat / thought record with its emotional impact."""

    id: str
    kind: MemoryKind
    text: str
    created_step: int
    poignancy: int
    pad_tag: PadDelta
    embedding: np.ndarray


@dataclass(frozen=True)
class RetrievalWeights:
    """Mix of relevance, recency, and importance in the retrieval score."""

    relevance: float = 1.0
    recency: float = 1.0
    importance: float = 1.0
    recency_decay: float = 0.995


@dataclass(frozen=True)
class RetrievalQuery:
    query_text: str
    query_embedding: np.ndarray
    now_step: int
    limit: int = DEFAULT_RETRIEVAL_LIMIT

    def __post_init__(self):
        if self.limit < 1:
            raise ValueError(f"limit must be >= 1, got {self.limit}")


class MemoryStore:
    """Append-only memory stream for one agent.

    The poignancy accumulator sums everything added since the last reset;
    crossing the reflection threshold raises the trigger flag.
    """

    def __init__(
        self,
        embedding_dim: int = EMBEDDING_DIM,
        reflection_threshold: int = DEFAULT_REFLECTION_THRESHOLD,
        weights: RetrievalWeights = RetrievalWeights(),
    ):
        if reflection_threshold < 1:
            raise ValueError(f"reflection_threshold must be >= 1, got {reflection_threshold}")
        self.embedding_dim = embedding_dim
        self.reflection_threshold = reflection_threshold
        self.weights = weights
        self.nodes: list[MemoryNode] = []
        self.poignancy_accumulator = 0

    def allocate_id(self) -> str:
        return f"m{len(self.nodes)}"

    def add(self, node: MemoryNode) -> bool:
        """Append a node. Returns True when the reflection trigger fires."""
        if not isinstance(node.poignancy, int) or not POIGNANCY_MIN <= node.poignancy <= POIGNANCY_MAX:
            raise ValueError(
                f"poignancy must be an integer in [{POIGNANCY_MIN}, {POIGNANCY_MAX}], got {node.poignancy!r}"
            )
        if len(node.embedding) != self.embedding_dim:
            raise ValueError(
                f"embedding length {len(node.embedding)} != store dimension {self.embedding_dim}"
            )
        self.nodes.append(node)
        self.poignancy_accumulator += node.poignancy
        return self.poignancy_accumulator > self.reflection_threshold

    def reset_accumulator(self) -> None:
        self.poignancy_accumulator = 0

    def retrieve(self, q: RetrievalQuery) -> list[MemoryNode]:
        """Top nodes by relevance + recency + importance, newest-first on ties."""
        if len(q.query_embedding) != self.embedding_dim:
            raise ValueError(
                f"query embedding length {len(q.query_embedding)} != store dimension {self.embedding_dim}"
            )
        w = self.weights
        scored = []
        for idx, node in enumerate(self.nodes):
            score = (
                w.relevance * cosine(q.query_embedding, node.embedding)
                + w.recency * w.recency_decay ** (q.now_step - node.created_step)
                + w.importance * node.poignancy / POIGNANCY_MAX
            )
            scored.append((-score, -node.created_step, -idx, node))
        scored.sort(key=lambda entry: entry[:3])
        return [entry[3] for entry in scored[: q.limit]]


@dataclass(frozen=True)
class ReflectionConfig:
    focus_question_cap: int = FOCUS_QUESTION_CAP
    retrieval_limit: int = DEFAULT_RETRIEVAL_LIMIT
    delta_cap: float = DEFAULT_DELTA_CAP
    max_tokens: int = 600


_FOCUS_SYSTEM = (
    "You review an agent's recent memories and name the questions that matter most to them right now."
)
_INSIGHT_SYSTEM = (
    "You synthesize an agent's memories into high-level observations.\n"
    "Write one insight per line, each ending with its importance marker, for example:\n"
    "The store needs a backup supplier. (poignancy: 7)\n"
    "Use integer poignancy from 1 (mundane) to 10 (life-changing)."
)
_SLOW_DELTA_SYSTEM = (
    "You judge how freshly synthesized insights shift an agent's overall emotional state, "
    "given their personality and current mood.\n"
)

_INSIGHT_RE = re.compile(r"^(?P<text>.*?)\s*\(\s*poignancy\s*[:=]\s*(?P<score>-?\d+)\s*\)\s*$", re.IGNORECASE)
_LINE_PREFIX_RE = re.compile(r"^\s*(?:[-*]|\d+[.)])\s*")


def _clean_lines(text: str) -> list[str]:
    lines = []
    for line in text.splitlines():
        line = _LINE_PREFIX_RE.sub("", line).strip()
        if line:
            lines.append(line)
    return lines


def parse_insight_lines(text: str) -> list[tuple[str, int]]:
    """Parse '<text> (poignancy: N)' lines; out-of-range scores are clamped."""
    insights = []
    for line in _clean_lines(text):
        m = _INSIGHT_RE.match(line)
        if not m:
            logger.warning("insight line without poignancy marker skipped: %r", line[:80])
            continue
        score = int(m["score"])
        if not POIGNANCY_MIN <= score <= POIGNANCY_MAX:
            clamped = max(POIGNANCY_MIN, min(POIGNANCY_MAX, score))
            logger.warning("poignancy %d out of range, clamped to %d", score, clamped)
            score = clamped
        insights.append((m["text"].strip(), score))
    return insights


def run_reflection(
    store: MemoryStore,
    agent_name: str,
    agent_profile: str,
    pad: PadState,
    gateway,
    now_step: int,
    cfg: ReflectionConfig = ReflectionConfig(),
    embed: Callable[[str], np.ndarray] = hashed_embedding,
) -> tuple[list[MemoryNode], PadDelta]:
    """Run the reflection pipeline and return (new thought nodes, slow delta).

    Order: focus questions -> per-question retrieval -> insights stored as
    thoughts -> chat-log extraction -> one slow emotion delta. The
    accumulator is reset only on completion, so a backend failure leaves the
    trigger armed for the next attempt.
    """
    recent = store.nodes[-RECENT_WINDOW:]
    recent_text = "\n".join(f"- {node.text}" for node in recent) or "none"

    focus_reply = gateway.send(
        ChatRequest(
            system_text=_FOCUS_SYSTEM,
            user_text=(
                f"Recent memories of {agent_name}:\n{recent_text}\n"
                f"List up to {cfg.focus_question_cap} focus questions, one per line."
            ),
            temperature=0.7,
            max_tokens=cfg.max_tokens,
            tag="reflect_focus",
        )
    )
    questions = _clean_lines(focus_reply.text)[: cfg.focus_question_cap]

    retrieved: list[MemoryNode] = []
    seen_ids: set[str] = set()
    for question in questions:
        hits = store.retrieve(
            RetrievalQuery(question, embed(question), now_step, limit=cfg.retrieval_limit)
        )
        for node in hits:
            if node.id not in seen_ids:
                seen_ids.add(node.id)
                retrieved.append(node)

    evidence = "\n".join(f"- {node.text}" for node in retrieved) or "none"
    insight_reply = gateway.send(
        ChatRequest(
            system_text=_INSIGHT_SYSTEM,
            user_text=(
                f"Focus questions:\n" + ("\n".join(f"- {q}" for q in questions) or "none")
                + f"\nMemories of {agent_name}:\n{evidence}"
            ),
            temperature=0.7,
            max_tokens=cfg.max_tokens,
            tag="reflect_insights",
        )
    )
    thoughts: list[MemoryNode] = []
    for text, score in parse_insight_lines(insight_reply.text):
        node = MemoryNode(
            id=store.allocate_id(),
            kind=MemoryKind.THOUGHT,
            text=text,
            created_step=now_step,
            poignancy=score,
            pad_tag=ZERO_DELTA,
            embedding=embed(text),
        )
        store.add(node)
        thoughts.append(node)

    # Recent conversations also yield planning notes and memorable moments.
    recent_chats = [node for node in recent if node.kind is MemoryKind.CHAT]
    if recent_chats:
        chat_text = "\n".join(f"- {node.text}" for node in recent_chats)
        extract_reply = gateway.send(
            ChatRequest(
                system_text=_INSIGHT_SYSTEM,
                user_text=(
                    f"Recent conversations of {agent_name}:\n{chat_text}\n"
                    "Extract planning-relevant information and memorable moments."
                ),
                temperature=0.7,
                max_tokens=cfg.max_tokens,
                tag="reflect_chat_extract",
            )
        )
        for text, score in parse_insight_lines(extract_reply.text):
            node = MemoryNode(
                id=store.allocate_id(),
                kind=MemoryKind.THOUGHT,
                text=text,
                created_step=now_step,
                poignancy=score,
                pad_tag=ZERO_DELTA,
                embedding=embed(text),
            )
            store.add(node)
            thoughts.append(node)

    insight_text = "\n".join(f"- {node.text}" for node in thoughts) or "none"
    delta_reply = gateway.send(
        ChatRequest(
            system_text=_SLOW_DELTA_SYSTEM
            + f"Report one line exactly in the form\n{agent_name}: (+0.00, +0.00, +0.00)",
            user_text=(
                f"Profile of {agent_name}:\n{agent_profile}\n"
                "Current PAD state (pleasure, arousal, dominance): "
                "({:.2f}, {:.2f}, {:.2f})\n".format(*pad.as_tuple())
                + f"New insights:\n{insight_text}"
            ),
            temperature=0.0,
            max_tokens=cfg.max_tokens,
            tag="reflect_delta",
        )
    )
    try:
        slow_delta = parse_delta_reply(delta_reply.text, [agent_name], cap=cfg.delta_cap).delta_for(
            agent_name
        )
    except DeltaParseError:
        logger.warning("reflection delta reply unparsable for %s; using zero delta", agent_name)
        slow_delta = ZERO_DELTA

    store.reset_accumulator()
    return thoughts, slow_delta


def dump_memories(store: MemoryStore, path: str | Path, include_embeddings: bool = False) -> None:
    """Write the stream as JSONL, one node per line. Embeddings are optional
    because they dominate dump size."""
    with open(path, "w", encoding="utf-8") as fh:
        for node in store.nodes:
            record = {
                "id": node.id,
                "kind": node.kind.value,
                "text": node.text,
                "created_step": node.created_step,
                "poignancy": node.poignancy,
                "pad_tag": [node.pad_tag.dp, node.pad_tag.da, node.pad_tag.dd],
            }
            if include_embeddings:
                record["embedding"] = [float(x) for x in node.embedding]
            fh.write(json.dumps(record) + "\n")


def load_memories(path: str | Path) -> list[dict]:
    """Read a memory dump back as plain dicts (diagnostics helper)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
