"""Pluggable chat backends: an OpenAI-compatible HTTP client with bounded
retries, a deterministic scripted mock, and the emotion-delta wire grammar."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import requests

from .emotion import DEFAULT_DELTA_CAP, PadDelta, clamp_delta

logger = logging.getLogger(__name__)

ENV_API_KEY = "SENTIPOLIS_API_KEY"
ENV_API_BASE = "SENTIPOLIS_API_BASE"
ENV_MODEL = "SENTIPOLIS_MODEL"
DEFAULT_API_BASE = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o-mini"

MAX_IN_FLIGHT = 4
RETRY_DELAYS = (1.0, 2.0, 4.0)

# Scripted replies may use this ordinal to serve any call of their tag that
# has no exact (tag, ordinal) entry.
WILDCARD_ORDINAL = "*"


class GatewayError(Exception):
    """Base class for chat-backend failures."""


class BackendError(GatewayError):
    """Live backend failed: configuration, auth, or network after retries."""


class ScriptError(GatewayError):
    """The scripted mock has no reply for a (tag, ordinal) lookup."""


class DeltaParseError(ValueError):
    """A reply contained no parseable emotion-delta triples."""


@dataclass(frozen=True)
class ChatRequest:
    """One chat call. The tag labels the call site; the mock dispatches on it."""

    system_text: str
    user_text: str
    temperature: float = 0.0
    max_tokens: int = 512
    tag: str = ""

    def __post_init__(self):
        if not self.tag:
            raise ValueError("ChatRequest.tag must be non-empty")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class ChatReply:
    text: str
    backend_id: str
    latency_ms: int = 0


@dataclass(frozen=True)
class DeltaReply:
    """Per-participant emotion deltas parsed from one reply."""

    deltas: tuple[tuple[str, PadDelta], ...]

    def delta_for(self, agent_id: str) -> PadDelta:
        for pid, delta in self.deltas:
            if pid == agent_id:
                return delta
        raise KeyError(agent_id)


class LiveBackend:
    """OpenAI-compatible chat-completions client.

    Transient failures (429, 5xx, connection errors) are retried up to three
    times with 1s/2s/4s backoff; auth rejections are not retried. At most
    MAX_IN_FLIGHT requests run concurrently.
    """

    def __init__(
        self,
        api_key: str,
        api_base: str = DEFAULT_API_BASE,
        model: str = DEFAULT_MODEL,
        timeout: float = 60.0,
        session=None,
        sleep=time.sleep,
    ):
        if not api_key:
            raise BackendError("live backend requires an API key")
        self.api_key = api_key
        self.api_base = api_base.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.backend_id = f"live:{model}"
        self.calls = 0
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(MAX_IN_FLIGHT)

    @classmethod
    def from_env(cls, **kwargs) -> "LiveBackend":
        key = os.environ.get(ENV_API_KEY, "")
        if not key:
            raise BackendError(f"{ENV_API_KEY} is not set")
        base = os.environ.get(ENV_API_BASE, DEFAULT_API_BASE)
        model = os.environ.get(ENV_MODEL, DEFAULT_MODEL)
        return cls(api_key=key, api_base=base, model=model, **kwargs)

    def send(self, req: ChatRequest) -> ChatReply:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.api_base}/chat/completions"
        start = time.monotonic()
        last_error: Exception | None = None
        with self._slots:
            self.calls += 1
            for attempt in range(len(RETRY_DELAYS) + 1):
                try:
                    resp = self._session.post(url, json=payload, headers=headers, timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = exc
                else:
                    if resp.status_code == 200:
                        try:
                            text = resp.json()["choices"][0]["message"]["content"]
                        except (ValueError, KeyError, IndexError) as exc:
                            raise BackendError(f"malformed completion payload: {exc}") from exc
                        latency = int((time.monotonic() - start) * 1000)
                        return ChatReply(text or "", self.backend_id, latency)
                    if resp.status_code in (401, 403):
                        raise BackendError(f"auth rejected (HTTP {resp.status_code}) for tag {req.tag!r}")
                    body = resp.text[:200]
                    if not (resp.status_code == 429 or resp.status_code >= 500):
                        raise BackendError(f"chat call failed (HTTP {resp.status_code}): {body}")
                    last_error = BackendError(f"HTTP {resp.status_code}: {body}")
                if attempt < len(RETRY_DELAYS):
                    self._sleep(RETRY_DELAYS[attempt])
        raise BackendError(
            f"chat call for tag {req.tag!r} failed after {len(RETRY_DELAYS) + 1} attempts: {last_error}"
        )


class MockBackend:
    """Deterministic scripted backend.

    Replies are keyed by (tag, per-tag call ordinal). A ``"*"`` ordinal entry
    serves any ordinal of its tag that has no exact entry. Calls are
    serialized so ordinals are well defined under concurrent use.
    """

    def __init__(self, entries: Iterable[tuple[str, int | str, str]]):
        self._exact: dict[tuple[str, int], str] = {}
        self._any: dict[str, str] = {}
        for tag, ordinal, text in entries:
            if ordinal == WILDCARD_ORDINAL:
                self._any[tag] = text
            else:
                self._exact[(tag, int(ordinal))] = text
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()
        self.backend_id = "mock"
        self.calls = 0

    @classmethod
    def from_script(cls, path: str | Path) -> "MockBackend":
        return cls(read_script(path))

    def send(self, req: ChatRequest) -> ChatReply:
        with self._lock:
            self.calls += 1
            ordinal = self._counts.get(req.tag, 0)
            self._counts[req.tag] = ordinal + 1
            text = self._exact.get((req.tag, ordinal))
            if text is None:
                text = self._any.get(req.tag)
        if text is None:
            raise ScriptError(f"mock script has no reply for tag {req.tag!r} ordinal {ordinal}")
        return ChatReply(text, self.backend_id, 0)


def read_script(path: str | Path) -> list[tuple[str, int | str, str]]:
    """Read a mock script: JSONL of {"tag", "ordinal", "reply_text"}."""
    path = Path(path)
    entries: list[tuple[str, int | str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                tag = obj["tag"]
                ordinal = obj["ordinal"]
                text = obj["reply_text"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed script entry: {exc}") from None
            if ordinal != WILDCARD_ORDINAL:
                ordinal = int(ordinal)
            entries.append((tag, ordinal, str(text)))
    return entries


def write_script(entries: Iterable[tuple[str, int | str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tag, ordinal, text in entries:
            fh.write(json.dumps({"tag": tag, "ordinal": ordinal, "reply_text": text}) + "\n")


# One emotion-delta line per participant. "ALL" applies one delta to every
# participant; scripted runs use it because one entry must serve any pair.
_TRIPLE_RE = re.compile(
    r"^\s*(?:[-*]\s*)?(?P<name>[^:()]+?)\s*:\s*"
    r"\(\s*(?P<x>[+-]?\d+(?:\.\d+)?)\s*,\s*(?P<y>[+-]?\d+(?:\.\d+)?)\s*,\s*(?P<z>[+-]?\d+(?:\.\d+)?)\s*\)"
)

DELTA_GRAMMAR_INSTRUCTIONS = (
    "Report the emotion change of every participant, one line each, exactly in the form\n"
    "Name: (+0.00, +0.00, +0.00)\n"
    "with signed pleasure, arousal, and dominance changes between -0.50 and +0.50."
)


def _name_matches(name: str, participant: str) -> bool:
    n = name.strip().lower()
    p = participant.strip().lower()
    return n == p or (p and n == p.split()[0])


def parse_delta_reply(
    text: str,
    participants: list[str],
    cap: float = DEFAULT_DELTA_CAP,
) -> DeltaReply:
    """Extract one capped delta per participant from reply text.

    Unmatched participants get a zero delta with a warning. Raises
    DeltaParseError when no triples parse at all.
    """
    found: dict[str, PadDelta] = {}
    broadcast: PadDelta | None = None
    parsed_any = False
    for line in text.splitlines():
        m = _TRIPLE_RE.match(line)
        if not m:
            continue
        parsed_any = True
        delta = clamp_delta((float(m["x"]), float(m["y"]), float(m["z"])), cap)
        name = m["name"].strip()
        if name.lower() == "all":
            broadcast = delta
            continue
        for pid in participants:
            if pid not in found and _name_matches(name, pid):
                found[pid] = delta
                break
    if not parsed_any:
        raise DeltaParseError(f"no emotion-delta triples found in reply {text[:120]!r}")
    out = []
    for pid in participants:
        if pid in found:
            out.append((pid, found[pid]))
        elif broadcast is not None:
            out.append((pid, broadcast))
        else:
            logger.warning("delta reply named no delta for %r; defaulting to zero", pid)
            out.append((pid, PadDelta()))
    return DeltaReply(tuple(out))


def format_delta_reply(reply: DeltaReply) -> str:
    """Render a DeltaReply in the wire grammar (lossless at 6 decimals)."""
    return "\n".join(
        "{}: ({:+.6f}, {:+.6f}, {:+.6f})".format(pid, *delta.as_tuple())
        for pid, delta in reply.deltas
    )
