"""Acceptance suite: one test per release criterion, each printing a
pass/fail line (run with -s or read captured output)."""

import math
import random
import time

import pytest

from sentipolis.cli import main
from sentipolis.demo import write_demo_script
from sentipolis.emotion import DecayConfig, PadDelta, PadState, apply_delta, decay
from sentipolis.enrichment import AnchorPoint, AnchorSet, EmotionLabel, knn_labels
from sentipolis.gateway import MockBackend
from sentipolis.judging import RankSeries, spearman, write_scorecards_csv, parse_scorecard_reply
from sentipolis.memory import MemoryKind, MemoryNode, MemoryStore, hashed_embedding, run_reflection
from sentipolis.network import (
    DirectedGraph,
    Partition,
    UndirectedGraph,
    analyze,
    check_monotone_edges,
    louvain,
    modularity,
    nmi,
    parse_snapshot_obj,
    read_snapshot_log,
    reciprocity,
    synthetic_rewired_log,
    synthetic_stable_log,
    write_metrics_csv,
)


def report(criterion: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] {criterion}: {status}{suffix}")


# --- criterion 1: PAD replay ---------------------------------------------------

ROUND_DELTAS = [
    ((0.10, 0.05, -0.05), (0.05, 0.10, -0.05)),
    ((0.10, 0.05, 0.15), (-0.10, 0.05, -0.05)),
    ((0.15, 0.05, 0.10), (-0.12, 0.15, 0.05)),
    ((0.15, 0.05, 0.10), (-0.12, 0.08, 0.00)),
]


def test_c1_pad_replay():
    start = time.perf_counter()
    a = PadState(0.22, 0.49, 0.53)
    b = PadState(0.22, 0.31, 0.49)
    for da, db in ROUND_DELTAS:
        a = apply_delta(a, PadDelta(*da))
        b = apply_delta(b, PadDelta(*db))
    elapsed_ms = (time.perf_counter() - start) * 1000
    ok_a = a.as_tuple() == pytest.approx((0.72, 0.69, 0.83), abs=1e-9)
    ok_b = b.as_tuple() == pytest.approx((-0.07, 0.69, 0.44), abs=1e-9)
    report("C1 pad replay", ok_a and ok_b and elapsed_ms < 1.0, f"{elapsed_ms:.3f} ms")
    assert ok_a and ok_b
    assert elapsed_ms < 1.0


# --- criterion 2: reflection replay ---------------------------------------------

REFLECTION_SCRIPT = [
    (
        "reflect_focus",
        "*",
        "1. How can Tom and John keep the Elmwood delivery deal on track?\n"
        "2. How should Tom brief Jenkins before the town meeting?\n"
        "3. How can Tom balance store work with following the election?",
    ),
    (
        "reflect_insights",
        "*",
        "- Tom and John are switching to Elmwood Co-op to hedge supplier risk. (poignancy: 7)\n"
        "- Conversations keep circling the election and supply chains. (poignancy: 7)\n"
        "- The store is strained by delayed catalogs and busy counters. (poignancy: 5)\n"
        "- Tom keeps a fixed daily routine from open to close. (poignancy: 1)",
    ),
    ("reflect_chat_extract", "*", ""),
    ("reflect_delta", "*", "Tom: (-0.10, +0.15, +0.20)"),
]


def test_c2_reflection_replay():
    store = MemoryStore()
    for i in range(15):
        store.add(
            MemoryNode(
                id=store.allocate_id(),
                kind=MemoryKind.EVENT,
                text=f"event {i} about suppliers and the election",
                created_step=i,
                poignancy=10,
                pad_tag=PadDelta(),
                embedding=hashed_embedding(f"event {i} about suppliers and the election"),
            )
        )
    triggered = store.add(
        MemoryNode(
            id=store.allocate_id(),
            kind=MemoryKind.EVENT,
            text="one more poignant event",
            created_step=15,
            poignancy=5,
            pad_tag=PadDelta(),
            embedding=hashed_embedding("one more poignant event"),
        )
    )
    accumulator = store.poignancy_accumulator
    start = time.perf_counter()
    _, slow_delta = run_reflection(
        store,
        "Tom Moreno",
        "Grocery shopkeeper.",
        PadState(0.79, 0.58, 0.79),
        MockBackend(REFLECTION_SCRIPT),
        now_step=19,
    )
    elapsed_ms = (time.perf_counter() - start) * 1000
    final = apply_delta(PadState(0.79, 0.58, 0.79), slow_delta)
    ok = (
        accumulator == 155
        and triggered
        and slow_delta == PadDelta(-0.10, 0.15, 0.20)
        and final.as_tuple() == pytest.approx((0.69, 0.73, 0.99), abs=1e-9)
        and elapsed_ms < 10.0
    )
    report("C2 reflection replay", ok, f"accumulator {accumulator}, {elapsed_ms:.2f} ms")
    assert accumulator == 155 and triggered
    assert slow_delta == PadDelta(-0.10, 0.15, 0.20)
    assert final.as_tuple() == pytest.approx((0.69, 0.73, 0.99), abs=1e-9)
    assert elapsed_ms < 10.0


# --- criterion 3: decay -----------------------------------------------------------


def test_c3_decay():
    cfg = DecayConfig(half_life_minutes=120)
    at_120 = decay(PadState(0.8, 0, 0), 120, cfg).p
    at_240 = decay(PadState(0.8, 0, 0), 240, cfg).p
    ok_points = abs(at_120 - 0.4) <= 1e-12 and abs(at_240 - 0.2) <= 1e-12
    rng = random.Random(131)
    worst = 0.0
    for _ in range(1000):
        s = PadState(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
        t1 = rng.uniform(0, 600)
        t2 = rng.uniform(0, 600)
        two = decay(decay(s, t1, cfg), t2, cfg)
        one = decay(s, t1 + t2, cfg)
        for x, y in zip(two.as_tuple(), one.as_tuple()):
            if y != 0:
                worst = max(worst, abs(x - y) / abs(y))
    ok_semigroup = worst <= 1e-12
    report("C3 decay", ok_points and ok_semigroup, f"max relative error {worst:.2e}")
    assert ok_points
    assert ok_semigroup


# --- criterion 4: synthetic network validation ------------------------------------


def test_c4_network_synthetic_validation():
    start = time.perf_counter()
    stable_rows = analyze([parse_snapshot_obj(o) for o in synthetic_stable_log()])
    rewired_rows = analyze([parse_snapshot_obj(o) for o in synthetic_rewired_log(rewire_step=6)])
    elapsed = time.perf_counter() - start
    stable_ok = (
        all(r.nmi_prev == 1.0 and r.drift_prev == 0.0 for r in stable_rows[1:])
        and all(r.q >= 0.6 for r in stable_rows)
    )
    boundary = next(r for r in rewired_rows if r.step == 6)
    rewired_ok = boundary.nmi_prev < 0.15 and boundary.drift_prev > 0.9
    ok = stable_ok and rewired_ok and elapsed < 2.0
    report(
        "C4 network synthetic validation",
        ok,
        f"Q={stable_rows[-1].q:.3f}, boundary NMI={boundary.nmi_prev:.3f}, "
        f"drift={boundary.drift_prev:.3f}, {elapsed:.2f} s",
    )
    assert stable_ok
    assert rewired_ok
    assert elapsed < 2.0


# --- criterion 5: metric oracles ---------------------------------------------------


def double_sum_modularity(g: UndirectedGraph, p: Partition) -> float:
    nodes = list(g.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)
    matrix = [[0.0] * n for _ in range(n)]
    for (u, v), w in g.weights.items():
        matrix[index[u]][index[v]] = w
        matrix[index[v]][index[u]] = w
    two_w = sum(sum(row) for row in matrix)
    if two_w == 0:
        return 0.0
    s = [sum(row) for row in matrix]
    q = 0.0
    for i in range(n):
        for j in range(n):
            if p.assignment[nodes[i]] == p.assignment[nodes[j]]:
                q += matrix[i][j] - s[i] * s[j] / two_w
    return q / two_w


def index_partitions(n, _cache={}):
    """All set partitions of range(n), cached per n."""
    if n not in _cache:
        parts = [[]]
        for item in range(n):
            grown = []
            for blocks in parts:
                for i in range(len(blocks)):
                    grown.append(blocks[:i] + [blocks[i] + [item]] + blocks[i + 1 :])
                grown.append(blocks + [[item]])
            parts = grown
        _cache[n] = parts
    return _cache[n]


def fast_q(edges, strengths, two_w, assignment):
    if two_w == 0:
        return 0.0
    intra = 0.0
    for u, v, w in edges:
        if assignment[u] == assignment[v]:
            intra += 2.0 * w
    totals = {}
    for node, cid in enumerate(assignment):
        totals[cid] = totals.get(cid, 0.0) + strengths[node]
    return intra / two_w - sum((t / two_w) ** 2 for t in totals.values())


def brute_force_best_q(g: UndirectedGraph) -> float:
    nodes = list(g.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    edges = [(index[u], index[v], w) for (u, v), w in g.weights.items()]
    strengths = [0.0] * len(nodes)
    for u, v, w in edges:
        strengths[u] += w
        strengths[v] += w
    two_w = sum(strengths)
    best = -math.inf
    assignment = [0] * len(nodes)
    for blocks in index_partitions(len(nodes)):
        for cid, block in enumerate(blocks):
            for item in block:
                assignment[item] = cid
        best = max(best, fast_q(edges, strengths, two_w, assignment))
    return best


def oracle_nmi(p1: Partition, p2: Partition) -> float:
    """Independent route: I = H1 + H2 - H_joint from explicit tables."""
    common = sorted(set(p1.assignment) & set(p2.assignment))
    n = len(common)
    joint = {}
    for v in common:
        key = (p1.assignment[v], p2.assignment[v])
        joint[key] = joint.get(key, 0) + 1
    left = {}
    right = {}
    for (c1, c2), count in joint.items():
        left[c1] = left.get(c1, 0) + count
        right[c2] = right.get(c2, 0) + count

    def entropy(counts):
        return -sum((c / n) * math.log(c / n) for c in counts)

    h1 = entropy(left.values())
    h2 = entropy(right.values())
    h12 = entropy(joint.values())
    if h1 == 0.0 and h2 == 0.0:
        return 1.0
    mi = h1 + h2 - h12
    return max(0.0, min(1.0, 2.0 * mi / (h1 + h2)))


def oracle_reciprocity(g: DirectedGraph):
    present = set()
    mutual = set()
    for (u, v) in g.edges:
        pair = frozenset((u, v))
        present.add(pair)
        if (v, u) in g.edges:
            mutual.add(pair)
    if not present:
        return 0.0, 0.0
    r = len(mutual) / len(present)
    if not mutual:
        return r, 0.0
    values = []
    for pair in sorted(tuple(sorted(p)) for p in mutual):
        u, v = pair
        w1, w2 = g.edges[(u, v)], g.edges[(v, u)]
        values.append(1.0 - abs(w1 - w2) / (w1 + w2))
    return r, sum(values) / len(values)


def random_graph_pair(rng):
    n = rng.randint(2, 8)
    nodes = [f"n{i}" for i in range(n)]
    directed = {}
    for u in nodes:
        for v in nodes:
            if u != v and rng.random() < 0.4:
                directed[(u, v)] = rng.uniform(0.1, 2.0)
    und = {}
    for i, u in enumerate(nodes):
        for v in nodes[i + 1 :]:
            if rng.random() < 0.5:
                und[(u, v)] = rng.uniform(0.1, 2.0)
    return DirectedGraph(tuple(nodes), directed), UndirectedGraph(tuple(nodes), und)


def test_c5_metric_oracles():
    rng = random.Random(401)
    worst_q = worst_nmi = 0.0
    louvain_gaps = 0
    for trial in range(500):
        dgraph, ugraph = random_graph_pair(rng)
        nodes = list(ugraph.nodes)
        p = Partition({v: rng.randrange(1, len(nodes) + 1) for v in nodes})
        worst_q = max(worst_q, abs(modularity(ugraph, p) - double_sum_modularity(ugraph, p)))

        q_louvain = modularity(ugraph, louvain(ugraph))
        q_best = brute_force_best_q(ugraph)
        assert q_louvain <= q_best + 1e-12, f"louvain beat exhaustive search on trial {trial}"
        if q_best - q_louvain > 0.05:
            louvain_gaps += 1

        assert reciprocity(dgraph) == oracle_reciprocity(dgraph)

        p2 = Partition({v: rng.randrange(1, len(nodes) + 1) for v in nodes})
        worst_nmi = max(worst_nmi, abs(nmi(p, p2) - oracle_nmi(p, p2)))
    ok = worst_q <= 1e-10 and worst_nmi <= 1e-10
    report(
        "C5 metric oracles",
        ok,
        f"max |Q err|={worst_q:.1e}, max |NMI err|={worst_nmi:.1e}, "
        f"louvain gaps >0.05: {louvain_gaps}/500",
    )
    assert worst_q <= 1e-10
    assert worst_nmi <= 1e-10


# --- criterion 6: KNN oracle --------------------------------------------------------


def oracle_knn(points, query, k):
    remaining = list(enumerate(points))
    out = []
    for _ in range(k):
        best = min(
            remaining,
            key=lambda item: (
                sum((a - b) ** 2 for a, b in zip(item[1].pad.as_tuple(), query.as_tuple())),
                item[0],
            ),
        )
        remaining.remove(best)
        out.append(best[1].label)
    return out


def test_c6_knn_oracle():
    rng = random.Random(601)
    labels = list(EmotionLabel)
    mismatches = 0
    for trial in range(1000):
        n = rng.randint(1, 200)
        tie_prone = trial % 2 == 0

        def coord():
            v = rng.uniform(-1, 1)
            return round(v * 4) / 4 if tie_prone else v

        points = [AnchorPoint(rng.choice(labels), PadState(coord(), coord(), coord())) for _ in range(n)]
        anchors = AnchorSet(points)
        k = rng.randint(1, min(n, 12))
        query = PadState(coord(), coord(), coord())
        if knn_labels(anchors, query, k=k) != oracle_knn(points, query, k):
            mismatches += 1
    report("C6 knn oracle", mismatches == 0, f"{mismatches}/1000 mismatches")
    assert mismatches == 0


# --- criterion 7: end-to-end determinism ----------------------------------------------


def test_c7_end_to_end_determinism(tmp_path):
    script = write_demo_script(tmp_path / "script.jsonl")
    start = time.perf_counter()
    assert main(["simulate", "--out", str(tmp_path / "run1"), "--script", str(script)]) == 0
    first_run = time.perf_counter() - start
    assert main(["simulate", "--out", str(tmp_path / "run2"), "--script", str(script)]) == 0
    identical = all(
        (tmp_path / "run1" / name).read_bytes() == (tmp_path / "run2" / name).read_bytes()
        for name in ("snapshots.jsonl", "transcripts.jsonl")
    )
    snapshots = read_snapshot_log(tmp_path / "run1" / "snapshots.jsonl")
    monotone = check_monotone_edges(snapshots)
    ok = identical and monotone and len(snapshots) == 36 and first_run < 30.0
    report(
        "C7 end-to-end determinism",
        ok,
        f"{len(snapshots)} snapshots, identical={identical}, monotone={monotone}, {first_run:.1f} s",
    )
    assert identical
    assert monotone
    assert len(snapshots) == 36
    assert first_run < 30.0


# --- criterion 8: spearman --------------------------------------------------------------


def test_c8_spearman():
    ids = ["a", "b", "c", "d"]
    x = RankSeries(tuple(zip(ids, [1, 2, 3, 4])))
    identical = spearman(x, x)
    reverse = spearman(x, RankSeries(tuple(zip(ids, [4, 3, 2, 1]))))
    swap = spearman(x, RankSeries(tuple(zip(ids, [1, 2, 4, 3]))))
    fixtures_ok = (
        identical == pytest.approx(1.0, abs=1e-12)
        and reverse == pytest.approx(-1.0, abs=1e-12)
        and swap == pytest.approx(0.8, abs=1e-12)
    )
    rng = random.Random(801)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(3, 15)
        item_ids = [f"i{k}" for k in range(n)]
        values = rng.sample(range(-1000, 1000), n)
        other = RankSeries(tuple((i, rng.random()) for i in item_ids))
        base = spearman(RankSeries(tuple(zip(item_ids, values))), other)
        scale = rng.uniform(0.1, 4.0)
        shift = rng.uniform(-10, 10)
        transformed = [scale * v**3 + scale * v + shift for v in values]
        after = spearman(RankSeries(tuple(zip(item_ids, transformed))), other)
        worst = max(worst, abs(after - base))
    ok = fixtures_ok and worst <= 1e-12
    report("C8 spearman", ok, f"max transform drift {worst:.1e}")
    assert fixtures_ok
    assert worst <= 1e-12


# --- criterion 9: desk-scale substitute (declared) ---------------------------------------


def test_c9_output_schemas(tmp_path):
    # Full reproduction of the published result tables needs live frontier
    # models; the deliverable here is the exact artifact shapes they aggregate.
    card = parse_scorecard_reply("COM=7.618 EMP=5.315 APP=6.978 CON=2.725 BEL=6.287 SOC=0.0", "t0", "j1")
    scorecards = tmp_path / "scorecards.csv"
    write_scorecards_csv([card], scorecards)
    lines = scorecards.read_text().splitlines()
    schema_ok = lines[0] == "transcript_id,judge_id,com,emp,app,con,bel,soc"
    row = lines[1].split(",")
    values = [float(v) for v in row[2:]]
    ranges_ok = all(0 <= v <= 10 for v in values[:5]) and -10 <= values[5] <= 0

    rows = analyze([parse_snapshot_obj(o) for o in synthetic_stable_log(n_snapshots=3)])
    metrics = tmp_path / "metrics.csv"
    write_metrics_csv(rows, metrics)
    mlines = metrics.read_text().splitlines()
    metrics_ok = (
        mlines[0] == "step,q,r,r_w,nmi_prev,drift_prev"
        and mlines[1].endswith(",,")
        and len(mlines) == 4
        and all(len(line.split(",")) == 6 for line in mlines[1:])
    )
    ok = schema_ok and ranges_ok and metrics_ok
    report("C9 output schemas (live-model tables declared out of reach)", ok)
    assert schema_ok
    assert ranges_ok
    assert metrics_ok
