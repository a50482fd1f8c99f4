"""Persistent PAD affect: the state vector, delta application, and half-life decay."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

PAD_MIN = -1.0
PAD_MAX = 1.0

# Per-dimension bound on a single emotion update. Observed conversational
# deltas are small (|d| <= 0.15), but upstream text generators are untrusted.
DEFAULT_DELTA_CAP = 0.5


def _clamp(x: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, x))


@dataclass(frozen=True)
class PadState:
    """A pleasure / arousal / dominance coordinate, each axis in [-1, 1]."""

    p: float = 0.0
    a: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        for name, v in (("p", self.p), ("a", self.a), ("d", self.d)):
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"PAD component {name} must be a finite number, got {v!r}")
            if not PAD_MIN <= v <= PAD_MAX:
                raise ValueError(f"PAD component {name}={v} outside [{PAD_MIN}, {PAD_MAX}]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p, self.a, self.d)


NEUTRAL = PadState()


@dataclass(frozen=True)
class PadDelta:
    """A signed change to a PadState. Bound untrusted triples with clamp_delta first."""

    dp: float = 0.0
    da: float = 0.0
    dd: float = 0.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dp, self.da, self.dd)

    def is_zero(self) -> bool:
        return self.dp == 0.0 and self.da == 0.0 and self.dd == 0.0


ZERO_DELTA = PadDelta()


@dataclass(frozen=True)
class DecayConfig:
    """Half-life relaxation parameters, both in simulated minutes."""

    half_life_minutes: float = 120.0
    step_minutes: float = 20.0

    def __post_init__(self):
        if not self.half_life_minutes > 0:
            raise ValueError(f"half_life_minutes must be > 0, got {self.half_life_minutes}")
        if not self.step_minutes > 0:
            raise ValueError(f"step_minutes must be > 0, got {self.step_minutes}")


def apply_delta(state: PadState, delta: PadDelta) -> PadState:
    """Add a delta componentwise, clamping each result into [-1, 1]."""
    return PadState(
        _clamp(state.p + delta.dp, PAD_MIN, PAD_MAX),
        _clamp(state.a + delta.da, PAD_MIN, PAD_MAX),
        _clamp(state.d + delta.dd, PAD_MIN, PAD_MAX),
    )


def decay(state: PadState, elapsed_minutes: float, cfg: DecayConfig) -> PadState:
    """Relax toward neutral: every half-life halves each component.

    Multiplies each axis by 2 ** (-elapsed / half_life), so signs are
    preserved and magnitudes never grow.
    """
    if elapsed_minutes < 0:
        raise ValueError(f"elapsed_minutes must be >= 0, got {elapsed_minutes}")
    factor = 2.0 ** (-elapsed_minutes / cfg.half_life_minutes)
    return PadState(state.p * factor, state.a * factor, state.d * factor)


def clamp_delta(raw: Iterable[float], cap: float = DEFAULT_DELTA_CAP) -> PadDelta:
    """Clip an untrusted (dp, da, dd) triple to [-cap, +cap] per component."""
    if not cap > 0:
        raise ValueError(f"cap must be > 0, got {cap}")
    vals = []
    for v in raw:
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"delta component must be finite, got {v!r}")
        vals.append(_clamp(v, -cap, cap))
    if len(vals) != 3:
        raise ValueError(f"expected 3 delta components, got {len(vals)}")
    return PadDelta(*vals)
