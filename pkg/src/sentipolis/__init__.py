"""Sentipolis: emotionally stateful agents with PAD dynamics, emotion-tagged
memory, and social-network diagnostics."""

__version__ = "0.1.0"

from .emotion import DecayConfig, PadDelta, PadState, apply_delta, clamp_delta, decay

__all__ = [
    "__version__",
    "PadState",
    "PadDelta",
    "DecayConfig",
    "apply_delta",
    "clamp_delta",
    "decay",
]
