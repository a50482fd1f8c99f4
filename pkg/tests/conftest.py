import pytest

from sentipolis.emotion import PadState
from sentipolis.engine import AgentProfile, SimConfig, World
from sentipolis.enrichment import AnchorPoint, AnchorSet, EmotionLabel
from sentipolis.gateway import MockBackend


@pytest.fixture
def tiny_anchors():
    return AnchorSet(
        [
            AnchorPoint(EmotionLabel.HAPPINESS, PadState(0.7, 0.4, 0.4)),
            AnchorPoint(EmotionLabel.ANGER, PadState(-0.6, 0.6, 0.45)),
            AnchorPoint(EmotionLabel.SADNESS, PadState(-0.6, -0.4, -0.45)),
            AnchorPoint(EmotionLabel.SURPRISE, PadState(0.2, 0.7, -0.1)),
            AnchorPoint(EmotionLabel.NEUTRAL, PadState(0.0, 0.0, 0.0)),
        ],
        k=3,
    )


TOM = AgentProfile(
    id="tom",
    name="Tom Moreno",
    persona_text="Grocery shopkeeper, protective of small shops.",
    home_location="market",
    initial_pad=PadState(0.22, 0.49, 0.53),
)
JOHN = AgentProfile(
    id="john",
    name="John Lin",
    persona_text="Pharmacist, curious about the election.",
    home_location="market",
    initial_pad=PadState(0.22, 0.31, 0.49),
)


@pytest.fixture
def pair_profiles():
    return [TOM, JOHN]


def build_world(profiles, entries, anchors, **config_overrides):
    config = SimConfig(n_agents=len(profiles), **config_overrides)
    return World(config, profiles, MockBackend(entries), anchors)


# Exact transcript of the reference four-round exchange, served by ordinal.
REPLAY_DELTA_REPLIES = [
    "Tom: (+0.10, +0.05, -0.05)\nJohn: (+0.05, +0.10, -0.05)",
    "Tom: (+0.10, +0.05, +0.15)\nJohn: (-0.10, +0.05, -0.05)",
    "Tom: (+0.15, +0.05, +0.10)\nJohn: (-0.12, +0.15, +0.05)",
    "Tom: (+0.15, +0.05, +0.10)\nJohn: (-0.12, +0.08, +0.00)",
]


def conversation_script(delta_replies=None, poignancy="5"):
    entries = [
        ("enrich", "*", "Feeling steady."),
        ("utterance", "*", "Talking about the day."),
        ("chat_summary", "*", "They talked about the election."),
        ("chat_poignancy", "*", poignancy),
    ]
    if delta_replies is None:
        entries.append(("round_delta", "*", "ALL: (+0.00, +0.00, +0.00)"))
    else:
        entries.extend(("round_delta", i, reply) for i, reply in enumerate(delta_replies))
    return entries
