"""Discrete-time world loop: encounter scheduling, two-agent conversations
with per-round affect updates, relationship probes, reflection dispatch, and
snapshot emission."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import random
import re
from dataclasses import dataclass, fields
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

from . import __version__
from .emotion import DecayConfig, PadDelta, PadState, apply_delta, clamp_delta, decay
from .enrichment import AnchorSet, EnrichmentRequest, build_enrichment_prompt, knn_labels
from .gateway import ChatRequest, DeltaParseError, GatewayError, parse_delta_reply
from .memory import (
    MemoryKind,
    MemoryNode,
    MemoryStore,
    RetrievalQuery,
    hashed_embedding,
    dump_memories,
    run_reflection,
)

logger = logging.getLogger(__name__)

TIME_FORMAT = "%Y-%m-%d %H:%M"

DEFAULT_LOCATIONS = (
    "market",
    "pharmacy",
    "cafe",
    "park",
    "library",
    "office",
    "school",
    "studio",
    "gym",
    "townhall",
)

CONVERSATION_RETRIEVAL_LIMIT = 10
DEFAULT_CHAT_POIGNANCY = 3


class ConfigError(ValueError):
    """A simulation config file or value is invalid."""


@dataclass(frozen=True)
class AgentProfile:
    """One persona: stable identity text plus a home location."""

    id: str
    name: str
    persona_text: str
    home_location: str
    initial_pad: PadState = PadState()

    def __post_init__(self):
        if not self.id:
            raise ValueError("agent id must be non-empty")
        if not self.persona_text:
            raise ValueError(f"agent {self.id!r} has empty persona_text")


def load_personas(path: str | Path) -> list[AgentProfile]:
    """Read personas from JSONL; ids must be unique."""
    path = Path(path)
    profiles: list[AgentProfile] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pad = PadState(*obj.get("initial_pad", (0.0, 0.0, 0.0)))
                profile = AgentProfile(
                    id=obj["id"],
                    name=obj["name"],
                    persona_text=obj["persona_text"],
                    home_location=obj["home_location"],
                    initial_pad=pad,
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad persona: {exc}") from None
            if profile.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate agent id {profile.id!r}")
            seen.add(profile.id)
            profiles.append(profile)
    return profiles


@dataclass
class SimConfig:
    """Run parameters; the config file mirrors these field names."""

    n_agents: int = 25
    n_steps: int = 36
    step_minutes: float = 20.0
    start_time: datetime = datetime(2025, 2, 13, 8, 0)
    half_life_minutes: float = 120.0
    conversation_rounds_max: int = 4
    probe_delta_cap: float = 0.3
    snapshot_every_steps: int = 1
    rng_seed: int = 42
    delta_cap: float = 0.5
    move_probability: float = 0.5
    reflection_threshold: int = 150
    locations: tuple[str, ...] = DEFAULT_LOCATIONS

    def __post_init__(self):
        if self.n_agents < 0:
            raise ConfigError(f"n_agents must be >= 0, got {self.n_agents}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.conversation_rounds_max < 1:
            raise ConfigError(f"conversation_rounds_max must be >= 1, got {self.conversation_rounds_max}")
        if self.snapshot_every_steps < 1:
            raise ConfigError(f"snapshot_every_steps must be >= 1, got {self.snapshot_every_steps}")
        if not self.probe_delta_cap > 0:
            raise ConfigError(f"probe_delta_cap must be > 0, got {self.probe_delta_cap}")
        if not 0.0 <= self.move_probability <= 1.0:
            raise ConfigError(f"move_probability must be in [0, 1], got {self.move_probability}")
        if not self.locations:
            raise ConfigError("locations must be non-empty")
        # Delegates range checks for the decay parameters.
        self.decay

    @property
    def decay(self) -> DecayConfig:
        return DecayConfig(self.half_life_minutes, self.step_minutes)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, datetime):
                v = v.strftime(TIME_FORMAT)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def load_sim_config(path: str | Path) -> SimConfig:
    """Parse a ``key = value`` config file ('#' starts a comment)."""
    path = Path(path)
    field_types = {f.name: f.type for f in fields(SimConfig)}
    overrides: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in field_types:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                overrides[key] = _parse_config_value(key, raw)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    try:
        return SimConfig(**overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_config_value(key: str, raw: str):
    if key in ("n_agents", "n_steps", "conversation_rounds_max", "snapshot_every_steps", "rng_seed", "reflection_threshold"):
        return int(raw)
    if key in ("step_minutes", "half_life_minutes", "probe_delta_cap", "delta_cap", "move_probability"):
        return float(raw)
    if key == "start_time":
        return datetime.strptime(raw, TIME_FORMAT)
    if key == "locations":
        values = tuple(part.strip() for part in raw.split(",") if part.strip())
        if not values:
            raise ValueError("locations list is empty")
        return values
    raise ValueError(f"unsupported config key {key!r}")


@dataclass
class AgentState:
    profile: AgentProfile
    pad: PadState
    location: str
    memory: MemoryStore


@dataclass
class RoundRecord:
    """One conversation round: an exchange of two utterances plus the
    emotion deltas applied after it."""

    turns: list[tuple[str, str]]
    deltas: dict[str, tuple[float, float, float]]


@dataclass
class ConversationRecord:
    step: int
    participants: tuple[str, str]
    location: str
    rounds: list[RoundRecord]

    def to_json_obj(self) -> dict:
        return {
            "step": self.step,
            "participants": list(self.participants),
            "location": self.location,
            "rounds": [
                {
                    "turns": [[speaker, text] for speaker, text in r.turns],
                    "deltas": {pid: [round(x, 6) for x in d] for pid, d in r.deltas.items()},
                }
                for r in self.rounds
            ],
        }

    def render_text(self) -> str:
        lines = [f"Location: {self.location} (step {self.step})"]
        for r in self.rounds:
            for speaker, text in r.turns:
                lines.append(f"{speaker}: {text}")
        return "\n".join(lines)


class World:
    """All mutable simulation state; mutated only by the step loop."""

    def __init__(
        self,
        config: SimConfig,
        profiles: Sequence[AgentProfile],
        gateway,
        anchors: AnchorSet,
    ):
        if len(profiles) < config.n_agents:
            raise ConfigError(f"need {config.n_agents} personas, file provides {len(profiles)}")
        self.config = config
        self.gateway = gateway
        self.anchors = anchors
        self.agents: dict[str, AgentState] = {}
        for profile in profiles[: config.n_agents]:
            self.agents[profile.id] = AgentState(
                profile=profile,
                pad=profile.initial_pad,
                location=profile.home_location,
                memory=MemoryStore(reflection_threshold=config.reflection_threshold),
            )
        self.rng = random.Random(config.rng_seed)
        self.step_index = 0
        self.clock = config.start_time
        self.weights: dict[tuple[str, str], float] = {}
        self.snapshots: list[dict] = []
        self.transcripts: list[ConversationRecord] = []
        self.reflection_due: set[str] = set()
        self.n_reflections = 0

    def agent_ids(self) -> list[str]:
        return sorted(self.agents)


def _send(world: World, req: ChatRequest) -> str | None:
    """Gateway call that degrades gracefully: failures return None."""
    try:
        return world.gateway.send(req).text
    except GatewayError as exc:
        logger.warning("gateway call %r failed: %s", req.tag, exc)
        return None


def _enrichment_paragraph(world: World, agent: AgentState) -> str:
    labels = knn_labels(world.anchors, agent.pad)
    recent = [node.text for node in agent.memory.nodes[-3:]]
    prompt = build_enrichment_prompt(
        EnrichmentRequest(
            labels=tuple(labels),
            profile_text=agent.profile.persona_text,
            recent_memory_texts=tuple(recent),
            pad=agent.pad,
        )
    )
    text = _send(
        world,
        ChatRequest(
            system_text="You write short grounded emotion descriptions.",
            user_text=prompt,
            temperature=0.7,
            max_tokens=300,
            tag="enrich",
        ),
    )
    if text is None:
        logger.warning("enrichment unavailable for %s; labels only", agent.profile.id)
        return "Current emotion labels: " + ", ".join(label.value for label in labels)
    return text


def _wants_conversation(world: World, a: AgentState, b: AgentState) -> bool:
    w_ab = world.weights.get((a.profile.id, b.profile.id), 0.0)
    w_ba = world.weights.get((b.profile.id, a.profile.id), 0.0)
    text = _send(
        world,
        ChatRequest(
            system_text="You decide whether two co-located agents strike up a conversation. Answer yes or no.",
            user_text=(
                f"{a.profile.name}: {a.profile.persona_text}\n"
                f"{b.profile.name}: {b.profile.persona_text}\n"
                f"Relationship strength {a.profile.name} toward {b.profile.name}: {w_ab:.2f}; "
                f"reverse: {w_ba:.2f}.\n"
                "Do they start talking right now? Answer yes or no."
            ),
            temperature=0.0,
            max_tokens=8,
            tag="initiate",
        ),
    )
    return bool(text) and text.strip().lower().startswith("y")


def _utterance(world: World, speaker: AgentState, listener: AgentState, mood: str, memories: list[str], history: list[tuple[str, str]]) -> str | None:
    so_far = "\n".join(f"{name}: {text}" for name, text in history) or "(conversation opening)"
    memory_text = "\n".join(f"- {m}" for m in memories) or "none"
    return _send(
        world,
        ChatRequest(
            system_text=(
                f"You are roleplaying {speaker.profile.name}. Stay in character and reply with only "
                f"their next utterance, no name prefix."
            ),
            user_text=(
                f"Profile:\n{speaker.profile.persona_text}\n"
                f"Current emotional state:\n{mood}\n"
                f"Relevant memories:\n{memory_text}\n"
                f"Conversation with {listener.profile.name} so far:\n{so_far}"
            ),
            temperature=0.7,
            max_tokens=200,
            tag="utterance",
        ),
    )


def run_conversation(world: World, a_id: str, b_id: str) -> ConversationRecord | None:
    """Alternating exchange with a fast emotion update after every round.

    Returns None when the opening utterance fails; later failures truncate
    the conversation to its completed rounds.
    """
    if a_id == b_id:
        raise ValueError("an agent cannot converse with itself")
    a = world.agents[a_id]
    b = world.agents[b_id]
    names = {a_id: a.profile.name, b_id: b.profile.name}
    mood = {pid: _enrichment_paragraph(world, world.agents[pid]) for pid in (a_id, b_id)}
    retrieved = {}
    for pid, other in ((a_id, b), (b_id, a)):
        query = f"{other.profile.name} {other.profile.persona_text}"
        hits = world.agents[pid].memory.retrieve(
            RetrievalQuery(query, hashed_embedding(query), world.step_index, limit=CONVERSATION_RETRIEVAL_LIMIT)
        )
        retrieved[pid] = [node.text for node in hits]

    record = ConversationRecord(
        step=world.step_index + 1,
        participants=(a_id, b_id),
        location=a.location,
        rounds=[],
    )
    history: list[tuple[str, str]] = []
    conversation_delta = {a_id: (0.0, 0.0, 0.0), b_id: (0.0, 0.0, 0.0)}
    for round_index in range(world.config.conversation_rounds_max):
        text_a = _utterance(world, a, b, mood[a_id], retrieved[a_id], history)
        if text_a is None:
            if round_index == 0:
                logger.warning("conversation (%s, %s) cancelled: opening utterance failed", a_id, b_id)
                return None
            break
        history.append((a.profile.name, text_a))
        text_b = _utterance(world, b, a, mood[b_id], retrieved[b_id], history)
        if text_b is None:
            if round_index == 0:
                logger.warning("conversation (%s, %s) cancelled: opening round failed", a_id, b_id)
                return None
            history.pop()
            break
        history.append((b.profile.name, text_b))

        round_text = f"{a.profile.name}: {text_a}\n{b.profile.name}: {text_b}"
        reply = _send(
            world,
            ChatRequest(
                system_text=(
                    "You score how one round of conversation shifts each participant's emotional state "
                    "in pleasure/arousal/dominance terms.\n" + _delta_instructions(names)
                ),
                user_text=round_text,
                temperature=0.0,
                max_tokens=100,
                tag="round_delta",
            ),
        )
        deltas = {a_id: PadDelta(), b_id: PadDelta()}
        if reply is not None:
            try:
                parsed = parse_delta_reply(reply, [names[a_id], names[b_id]], cap=world.config.delta_cap)
                deltas = {a_id: parsed.delta_for(names[a_id]), b_id: parsed.delta_for(names[b_id])}
            except DeltaParseError as exc:
                logger.warning("round delta unparsable, treating round as neutral: %s", exc)
        for pid, delta in deltas.items():
            agent = world.agents[pid]
            agent.pad = apply_delta(agent.pad, delta)
            prev = conversation_delta[pid]
            conversation_delta[pid] = tuple(p + d for p, d in zip(prev, delta.as_tuple()))
        record.rounds.append(
            RoundRecord(
                turns=[(a.profile.name, text_a), (b.profile.name, text_b)],
                deltas={pid: deltas[pid].as_tuple() for pid in (a_id, b_id)},
            )
        )

    if not record.rounds:
        return None
    _store_chat_memory(world, record, conversation_delta)
    return record


def _delta_instructions(names: dict[str, str]) -> str:
    listing = " and ".join(names.values())
    return (
        f"Report one line per participant ({listing}), exactly in the form\n"
        "Name: (+0.00, +0.00, +0.00)\n"
        "with each signed component between -0.50 and +0.50."
    )


def _store_chat_memory(world: World, record: ConversationRecord, conversation_delta: dict) -> None:
    a_id, b_id = record.participants
    names = [world.agents[a_id].profile.name, world.agents[b_id].profile.name]
    summary = _send(
        world,
        ChatRequest(
            system_text="Summarize the conversation in one sentence naming both participants.",
            user_text=record.render_text(),
            temperature=0.7,
            max_tokens=120,
            tag="chat_summary",
        ),
    )
    if summary is None:
        summary = f"{names[0]} and {names[1]} talked at the {record.location}."
    poignancy = _chat_poignancy(world, summary)
    for pid in record.participants:
        agent = world.agents[pid]
        node = MemoryNode(
            id=agent.memory.allocate_id(),
            kind=MemoryKind.CHAT,
            text=summary,
            created_step=record.step,
            poignancy=poignancy,
            pad_tag=clamp_delta(conversation_delta[pid], world.config.delta_cap),
            embedding=hashed_embedding(summary),
        )
        if agent.memory.add(node):
            world.reflection_due.add(pid)


def _chat_poignancy(world: World, summary: str) -> int:
    reply = _send(
        world,
        ChatRequest(
            system_text="Rate the poignancy of this memory from 1 (mundane) to 10 (life-changing). Reply with one integer.",
            user_text=summary,
            temperature=0.0,
            max_tokens=8,
            tag="chat_poignancy",
        ),
    )
    if reply is not None:
        m = re.search(r"-?\d+", reply)
        if m:
            value = int(m.group())
            clamped = max(1, min(10, value))
            if clamped != value:
                logger.warning("poignancy %d out of range, clamped to %d", value, clamped)
            return clamped
    logger.warning("poignancy reply unusable; defaulting to %d", DEFAULT_CHAT_POIGNANCY)
    return DEFAULT_CHAT_POIGNANCY


_SIGNED_NUMBER_RE = re.compile(r"[+-]?\d+(?:\.\d+)?")


def relationship_probe(world: World, record: ConversationRecord) -> None:
    """Each participant reports a signed update to their directed tie.

    The edge exists from the first interaction on; an unparsable probe
    leaves the weight unchanged.
    """
    cap = world.config.probe_delta_cap
    for src_id in record.participants:
        dst_id = record.participants[1] if src_id == record.participants[0] else record.participants[0]
        src = world.agents[src_id]
        dst = world.agents[dst_id]
        key = (src_id, dst_id)
        world.weights.setdefault(key, 0.0)
        reply = _send(
            world,
            ChatRequest(
                system_text=(
                    "After the conversation below, report how much the speaker's relationship toward "
                    f"the partner changed, as one signed number between {-cap:.2f} and {cap:.2f}."
                ),
                user_text=(
                    f"Speaker: {src.profile.name}\nPartner: {dst.profile.name}\n" + record.render_text()
                ),
                temperature=0.0,
                max_tokens=8,
                tag="probe",
            ),
        )
        delta = 0.0
        if reply is None:
            logger.warning("probe failed for %s -> %s; weight unchanged", src_id, dst_id)
        else:
            m = _SIGNED_NUMBER_RE.search(reply)
            if m:
                delta = max(-cap, min(cap, float(m.group())))
            else:
                logger.warning("probe reply unparsable for %s -> %s; weight unchanged", src_id, dst_id)
        world.weights[key] = max(-1.0, min(1.0, world.weights[key] + delta))


def emit_snapshot(world: World) -> dict:
    """Serialize the full directed weighted edge list for the current step."""
    edges = [
        [src, dst, round(w, 6)]
        for (src, dst), w in sorted(world.weights.items())
    ]
    snapshot = {"step": world.step_index, "edges": edges}
    world.snapshots.append(snapshot)
    return snapshot


def step(world: World) -> dict | None:
    """Advance the world one stride. Returns the snapshot if one was due."""
    cfg = world.config
    if world.step_index >= cfg.n_steps:
        raise ValueError("simulation already ran its configured steps")
    decay_cfg = cfg.decay

    # Affect decays before anyone acts, so within-step deltas stay undecayed.
    for agent_id in world.agent_ids():
        agent = world.agents[agent_id]
        agent.pad = decay(agent.pad, cfg.step_minutes, decay_cfg)

    for agent_id in world.agent_ids():
        agent = world.agents[agent_id]
        if world.rng.random() < cfg.move_probability:
            agent.location = world.rng.choice(cfg.locations)

    by_location: dict[str, list[str]] = {}
    for agent_id in world.agent_ids():
        by_location.setdefault(world.agents[agent_id].location, []).append(agent_id)
    engaged: set[str] = set()
    pairs: list[tuple[str, str]] = []
    for location in sorted(by_location):
        members = by_location[location]
        for a_id, b_id in itertools.combinations(members, 2):
            if a_id in engaged or b_id in engaged:
                continue
            if _wants_conversation(world, world.agents[a_id], world.agents[b_id]):
                engaged.add(a_id)
                engaged.add(b_id)
                pairs.append((a_id, b_id))

    completed: list[ConversationRecord] = []
    for a_id, b_id in pairs:
        record = run_conversation(world, a_id, b_id)
        if record is not None:
            completed.append(record)
            world.transcripts.append(record)

    for record in completed:
        relationship_probe(world, record)

    for agent_id in sorted(world.reflection_due):
        agent = world.agents[agent_id]
        try:
            _, slow_delta = run_reflection(
                agent.memory,
                agent.profile.name,
                agent.profile.persona_text,
                agent.pad,
                world.gateway,
                now_step=world.step_index + 1,
            )
        except GatewayError as exc:
            logger.warning("reflection aborted for %s (trigger stays armed): %s", agent_id, exc)
            continue
        agent.pad = apply_delta(agent.pad, clamp_delta(slow_delta.as_tuple(), cfg.delta_cap))
        world.n_reflections += 1
    world.reflection_due.clear()

    world.step_index += 1
    world.clock += timedelta(minutes=cfg.step_minutes)
    if world.step_index % cfg.snapshot_every_steps == 0:
        return emit_snapshot(world)
    return None


def _sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_simulation(
    config: SimConfig,
    profiles: Sequence[AgentProfile],
    gateway,
    anchors: AnchorSet,
    out_dir: str | Path,
    personas_path: str | Path | None = None,
    script_path: str | Path | None = None,
) -> World:
    """Run the configured number of steps and write all artifacts under out_dir.

    Writes snapshots.jsonl, transcripts.jsonl, memories/<agent>.jsonl, and
    manifest.json. Snapshot write failures abort the run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = World(config, profiles, gateway, anchors)
    transcripts_written = 0
    with open(out / "snapshots.jsonl", "w", encoding="utf-8") as snap_fh, open(
        out / "transcripts.jsonl", "w", encoding="utf-8"
    ) as script_fh:
        for _ in range(config.n_steps):
            snapshot = step(world)
            if snapshot is not None:
                snap_fh.write(json.dumps(snapshot) + "\n")
                snap_fh.flush()
            while transcripts_written < len(world.transcripts):
                record = world.transcripts[transcripts_written]
                script_fh.write(json.dumps(record.to_json_obj()) + "\n")
                transcripts_written += 1

    memory_dir = out / "memories"
    memory_dir.mkdir(exist_ok=True)
    for agent_id in world.agent_ids():
        dump_memories(world.agents[agent_id].memory, memory_dir / f"{agent_id}.jsonl")

    manifest = {
        "format": "sentipolis-run-v1",
        "package_version": __version__,
        "backend": getattr(gateway, "backend_id", "unknown"),
        "seed": config.rng_seed,
        "config": config.to_dict(),
        "personas_sha256": _sha256_file(personas_path) if personas_path else None,
        "script_sha256": _sha256_file(script_path) if script_path else None,
        "end_time": world.clock.strftime(TIME_FORMAT),
        "n_conversations": len(world.transcripts),
        "n_reflections": world.n_reflections,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return world
