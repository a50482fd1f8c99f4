"""Built-in release checks: the reference conversation replay and the
synthetic network validations."""

from __future__ import annotations

from dataclasses import dataclass

from .emotion import PadDelta, PadState, apply_delta
from .network import (
    analyze,
    check_monotone_edges,
    parse_snapshot_obj,
    synthetic_rewired_log,
    synthetic_stable_log,
)

# Reference two-agent conversation: four rounds of paired deltas and the
# resulting final states. Used as a mutation-sensitive replay check.
REPLAY_INITIAL_A = (0.22, 0.49, 0.53)
REPLAY_INITIAL_B = (0.22, 0.31, 0.49)
REPLAY_ROUND_DELTAS = (
    ((0.10, 0.05, -0.05), (0.05, 0.10, -0.05)),
    ((0.10, 0.05, 0.15), (-0.10, 0.05, -0.05)),
    ((0.15, 0.05, 0.10), (-0.12, 0.15, 0.05)),
    ((0.15, 0.05, 0.10), (-0.12, 0.08, 0.00)),
)
REPLAY_FINAL_A = (0.72, 0.69, 0.83)
REPLAY_FINAL_B = (-0.07, 0.69, 0.44)

# Reference reflection: one slow delta applied to a known state.
REFLECTION_INITIAL = (0.79, 0.58, 0.79)
REFLECTION_SLOW_DELTA = (-0.10, 0.15, 0.20)
REFLECTION_FINAL = (0.69, 0.73, 0.99)

REPLAY_TOLERANCE = 1e-9

STABLE_MIN_Q = 0.6
REWIRING_MAX_NMI = 0.15
REWIRING_MIN_DRIFT = 0.9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def replay_conversation() -> tuple[PadState, PadState]:
    a = PadState(*REPLAY_INITIAL_A)
    b = PadState(*REPLAY_INITIAL_B)
    for delta_a, delta_b in REPLAY_ROUND_DELTAS:
        a = apply_delta(a, PadDelta(*delta_a))
        b = apply_delta(b, PadDelta(*delta_b))
    return a, b


def _close(got: tuple, want: tuple, tol: float = REPLAY_TOLERANCE) -> bool:
    return all(abs(g - w) <= tol for g, w in zip(got, want))


def pad_replay_check() -> CheckResult:
    a, b = replay_conversation()
    ok = _close(a.as_tuple(), REPLAY_FINAL_A) and _close(b.as_tuple(), REPLAY_FINAL_B)
    detail = (
        f"final A=({a.p:.2f}, {a.a:.2f}, {a.d:.2f}) expected {REPLAY_FINAL_A}; "
        f"final B=({b.p:.2f}, {b.a:.2f}, {b.d:.2f}) expected {REPLAY_FINAL_B}"
    )
    return CheckResult("pad_replay", ok, detail)


def reflection_replay_check() -> CheckResult:
    final = apply_delta(PadState(*REFLECTION_INITIAL), PadDelta(*REFLECTION_SLOW_DELTA))
    ok = _close(final.as_tuple(), REFLECTION_FINAL)
    detail = f"final=({final.p:.2f}, {final.a:.2f}, {final.d:.2f}) expected {REFLECTION_FINAL}"
    return CheckResult("reflection_replay", ok, detail)


def stable_network_check() -> CheckResult:
    snapshots = [parse_snapshot_obj(obj) for obj in synthetic_stable_log()]
    rows = analyze(snapshots)
    adjacent = rows[1:]
    nmi_ok = all(row.nmi_prev == 1.0 for row in adjacent)
    drift_ok = all(row.drift_prev == 0.0 for row in adjacent)
    q_ok = all(row.q >= STABLE_MIN_Q for row in rows)
    monotone_ok = check_monotone_edges(snapshots)
    ok = nmi_ok and drift_ok and q_ok and monotone_ok
    detail = (
        f"Q={rows[-1].q:.3f} (>= {STABLE_MIN_Q}), "
        f"NMI={'1.0 at every pair' if nmi_ok else 'FAILED'}, "
        f"drift={'0.0 at every pair' if drift_ok else 'FAILED'}"
    )
    return CheckResult("stable_network", ok, detail)


def rewiring_network_check(rewire_step: int = 6) -> CheckResult:
    snapshots = [parse_snapshot_obj(obj) for obj in synthetic_rewired_log(rewire_step=rewire_step)]
    rows = analyze(snapshots)
    boundary = next(row for row in rows if row.step == rewire_step)
    ok = boundary.nmi_prev < REWIRING_MAX_NMI and boundary.drift_prev > REWIRING_MIN_DRIFT
    detail = (
        f"boundary NMI={boundary.nmi_prev:.3f} (< {REWIRING_MAX_NMI}), "
        f"drift={boundary.drift_prev:.3f} (> {REWIRING_MIN_DRIFT})"
    )
    return CheckResult("rewiring_network", ok, detail)


def run_all() -> list[CheckResult]:
    return [
        pad_replay_check(),
        reflection_replay_check(),
        stable_network_check(),
        rewiring_network_check(),
    ]
