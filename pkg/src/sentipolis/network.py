"""Directed social-graph diagnostics: weight thresholding, symmetrization,
seeded Louvain community detection, reciprocity, adjacent-snapshot partition
agreement, and strength-weighted community drift."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.2
DEFAULT_RESOLUTION = 1.0
DEFAULT_LOUVAIN_SEED = 42

# Minimum Jaccard similarity for two communities in consecutive snapshots to
# count as the same community when scoring drift. Below it, a community has
# no successor and all of its members count as changed.
JACCARD_MATCH_THRESHOLD = 0.5

_GAIN_EPS = 1e-12


@dataclass
class DirectedGraph:
    """Directed weighted graph: at most one edge per ordered pair, no self-loops."""

    nodes: tuple[str, ...]
    edges: dict[tuple[str, str], float]

    def __post_init__(self):
        known = set(self.nodes)
        for (src, dst) in self.edges:
            if src == dst:
                raise ValueError(f"self-loop on {src!r} not allowed")
            if src not in known or dst not in known:
                raise ValueError(f"edge ({src!r}, {dst!r}) references unknown node")

    @classmethod
    def from_edge_list(
        cls,
        edges: Iterable[tuple[str, str, float]],
        nodes: Sequence[str] | None = None,
    ) -> "DirectedGraph":
        edge_map: dict[tuple[str, str], float] = {}
        seen: set[str] = set()
        for src, dst, w in edges:
            key = (src, dst)
            if key in edge_map:
                raise ValueError(f"duplicate edge ({src!r}, {dst!r})")
            edge_map[key] = float(w)
            seen.add(src)
            seen.add(dst)
        if nodes is None:
            node_tuple = tuple(sorted(seen))
        else:
            node_tuple = tuple(nodes)
        return cls(node_tuple, edge_map)


@dataclass
class UndirectedGraph:
    """Undirected weighted graph; keys are (u, v) with u < v."""

    nodes: tuple[str, ...]
    weights: dict[tuple[str, str], float]

    def strengths(self) -> dict[str, float]:
        s = {v: 0.0 for v in self.nodes}
        for (u, v), w in self.weights.items():
            s[u] += w
            s[v] += w
        return s

    def active_nodes(self) -> set[str]:
        out: set[str] = set()
        for (u, v) in self.weights:
            out.add(u)
            out.add(v)
        return out


def threshold(g: DirectedGraph, tau: float = DEFAULT_TAU) -> DirectedGraph:
    """Keep exactly the edges with weight >= tau; the node set is unchanged.

    Drops negative and weak ties in one pass.
    """
    kept = {key: w for key, w in g.edges.items() if w >= tau}
    return DirectedGraph(g.nodes, kept)


def symmetrize(g: DirectedGraph) -> UndirectedGraph:
    """Sum bidirectional weights into one undirected weight per pair.

    Expects an already-thresholded graph; summing (not averaging) preserves
    total tie strength between each pair.
    """
    weights: dict[tuple[str, str], float] = {}
    for (src, dst), w in g.edges.items():
        key = (src, dst) if src < dst else (dst, src)
        weights[key] = weights.get(key, 0.0) + w
    return UndirectedGraph(g.nodes, weights)


@dataclass
class Partition:
    """Community assignment: every analyzed node maps to exactly one id."""

    assignment: dict[str, int]

    def communities(self) -> dict[int, set[str]]:
        groups: dict[int, set[str]] = {}
        for node, cid in self.assignment.items():
            groups.setdefault(cid, set()).add(node)
        return groups

    def restricted(self, nodes: set[str]) -> "Partition":
        return Partition({v: c for v, c in self.assignment.items() if v in nodes})


def _canonical(assignment: dict) -> Partition:
    """Relabel communities 0..k-1 in order of their smallest member node."""
    groups: dict[object, list[str]] = {}
    for node, label in assignment.items():
        groups.setdefault(label, []).append(node)
    ordered = sorted(groups.values(), key=min)
    out: dict[str, int] = {}
    for cid, members in enumerate(ordered):
        for node in members:
            out[node] = cid
    return Partition(out)


def _local_pass(nodes, adj, self_loops, resolution, rng):
    """One round of greedy local moves. Returns (community map, moved flag)."""
    strength = {u: sum(adj[u].values()) + self_loops[u] for u in nodes}
    two_w = sum(strength.values())
    comm = {u: u for u in nodes}
    if two_w == 0.0:
        return comm, False
    tot = dict(strength)
    order = sorted(nodes)
    rng.shuffle(order)
    moved_any = False
    improved = True
    while improved:
        improved = False
        for u in order:
            cu = comm[u]
            k_uc: dict = {}
            for v, w in adj[u].items():
                k_uc[comm[v]] = k_uc.get(comm[v], 0.0) + w
            tot[cu] -= strength[u]
            best_c = cu
            best_score = k_uc.get(cu, 0.0) - resolution * strength[u] * tot[cu] / two_w
            for c in sorted(k_uc):
                if c == cu:
                    continue
                score = k_uc[c] - resolution * strength[u] * tot[c] / two_w
                if score > best_score + _GAIN_EPS:
                    best_c = c
                    best_score = score
            tot[best_c] += strength[u]
            if best_c != cu:
                comm[u] = best_c
                improved = True
                moved_any = True
    return comm, moved_any


def _aggregate(nodes, adj, self_loops, comm):
    """Collapse communities into super-nodes, preserving total weight."""
    labels = {rep: i for i, rep in enumerate(sorted({comm[u] for u in nodes}))}
    new_nodes = list(range(len(labels)))
    new_adj: dict[int, dict[int, float]] = {c: {} for c in new_nodes}
    new_self = {c: 0.0 for c in new_nodes}
    for u in nodes:
        cu = labels[comm[u]]
        new_self[cu] += self_loops[u]
        for v, w in adj[u].items():
            cv = labels[comm[v]]
            if cu == cv:
                # (u, v) and (v, u) both iterate, so intra weight lands doubled,
                # matching the diagonal convention strength() relies on.
                new_self[cu] += w
            else:
                new_adj[cu][cv] = new_adj[cu].get(cv, 0.0) + w
    return new_nodes, new_adj, new_self, labels


def louvain(
    g: UndirectedGraph,
    resolution: float = DEFAULT_RESOLUTION,
    seed: int = DEFAULT_LOUVAIN_SEED,
) -> Partition:
    """Greedy modularity maximization: local moves plus aggregation to a fixed
    point. Node visit order is a seeded shuffle of the canonically sorted node
    list, so the result depends only on (graph, resolution, seed). Nodes with
    no edges end up in singleton communities.
    """
    for (u, v), w in g.weights.items():
        if w < 0:
            raise ValueError(f"negative weight {w} on ({u!r}, {v!r}); filter negatives first")
    if not g.nodes:
        return Partition({})
    rng = random.Random(seed)
    nodes: list = sorted(g.nodes)
    adj: dict = {u: {} for u in nodes}
    for (u, v), w in sorted(g.weights.items()):
        adj[u][v] = adj[u].get(v, 0.0) + w
        adj[v][u] = adj[v].get(u, 0.0) + w
    self_loops: dict = {u: 0.0 for u in nodes}
    member = {u: u for u in g.nodes}

    while True:
        comm, moved = _local_pass(nodes, adj, self_loops, resolution, rng)
        if not moved:
            break
        nodes, adj, self_loops, labels = _aggregate(nodes, adj, self_loops, comm)
        member = {orig: labels[comm[cur]] for orig, cur in member.items()}
        if len(nodes) == 1:
            break
    return _canonical(member)


def modularity(g: UndirectedGraph, p: Partition) -> float:
    """Weighted modularity of a partition.

    Convention: the double sum runs over the symmetric weight matrix, so each
    undirected edge contributes twice and 2W equals the matrix total. An
    empty graph scores 0.
    """
    two_w = 2.0 * sum(g.weights.values())
    if two_w == 0.0:
        return 0.0
    active = g.active_nodes()
    missing = active - set(p.assignment)
    if missing:
        raise ValueError(f"partition is missing nodes: {sorted(missing)[:5]}")
    intra = 0.0
    for (u, v), w in g.weights.items():
        if p.assignment[u] == p.assignment[v]:
            intra += 2.0 * w
    strengths = g.strengths()
    community_strength: dict[int, float] = {}
    for node, cid in p.assignment.items():
        community_strength[cid] = community_strength.get(cid, 0.0) + strengths.get(node, 0.0)
    null = sum((s / two_w) ** 2 for s in community_strength.values())
    return intra / two_w - null


def reciprocity(g: DirectedGraph) -> tuple[float, float]:
    """Binary and weighted reciprocity over unordered pairs.

    r is the fraction of connected pairs that are mutual; r_w averages the
    weight-symmetry ratio over mutual pairs. Both are 0 (flagged in the log)
    when their denominator is empty.
    """
    pairs: dict[tuple[str, str], list[float]] = {}
    for (src, dst), w in g.edges.items():
        key = (src, dst) if src < dst else (dst, src)
        pairs.setdefault(key, []).append(w)
    if not pairs:
        logger.info("reciprocity: no edges above threshold; reporting r=0, r_w=0")
        return 0.0, 0.0
    # Sorted pair order keeps the r_w sum independent of edge insertion order.
    mutual = [ws for _, ws in sorted(pairs.items()) if len(ws) == 2]
    r = len(mutual) / len(pairs)
    if not mutual:
        logger.info("reciprocity: no reciprocal pairs; reporting r_w=0")
        return r, 0.0
    total = 0.0
    for w1, w2 in mutual:
        denom = w1 + w2
        total += 1.0 if denom == 0.0 else 1.0 - abs(w1 - w2) / denom
    return r, total / len(mutual)


def nmi(p1: Partition, p2: Partition) -> float:
    """Normalized mutual information, 2I / (H1 + H2), natural log, over the
    common node set. Both-partitions-trivial (zero entropy on both sides) is
    defined as 1.0."""
    common = sorted(set(p1.assignment) & set(p2.assignment))
    if not common:
        raise ValueError("partitions share no nodes")
    n = len(common)
    joint: dict[tuple[int, int], int] = {}
    left: dict[int, int] = {}
    right: dict[int, int] = {}
    for node in common:
        c1 = p1.assignment[node]
        c2 = p2.assignment[node]
        joint[(c1, c2)] = joint.get((c1, c2), 0) + 1
        left[c1] = left.get(c1, 0) + 1
        right[c2] = right.get(c2, 0) + 1
    if all(count == left[c1] == right[c2] for (c1, c2), count in joint.items()):
        # Identical up to relabeling: I equals both entropies, so the ratio
        # is exactly 1 (and the zero-entropy case is defined as 1).
        if len(left) == 1:
            logger.info("nmi: both partitions are single-community; reporting 1.0")
        return 1.0
    h1 = -sum((c / n) * math.log(c / n) for c in left.values())
    h2 = -sum((c / n) * math.log(c / n) for c in right.values())
    mi = 0.0
    for (c1, c2), count in joint.items():
        p_joint = count / n
        mi += p_joint * math.log(p_joint * n * n / (left[c1] * right[c2]))
    value = 2.0 * mi / (h1 + h2)
    return min(1.0, max(0.0, value))


def _match_communities(
    p1: Partition, p2: Partition, common: set[str], min_jaccard: float
) -> dict[int, int]:
    """Greedy max-Jaccard matching of earlier to later communities.

    Pairs below min_jaccard stay unmatched; their members all count as
    changed. Greedy order is (descending Jaccard, community ids) so the
    matching is deterministic.
    """
    groups1 = Partition({v: c for v, c in p1.assignment.items() if v in common}).communities()
    groups2 = Partition({v: c for v, c in p2.assignment.items() if v in common}).communities()
    candidates = []
    for c1, members1 in groups1.items():
        for c2, members2 in groups2.items():
            inter = len(members1 & members2)
            if inter == 0:
                continue
            jac = inter / len(members1 | members2)
            if jac >= min_jaccard:
                candidates.append((-jac, c1, c2))
    candidates.sort()
    matched: dict[int, int] = {}
    used: set[int] = set()
    for _, c1, c2 in candidates:
        if c1 in matched or c2 in used:
            continue
        matched[c1] = c2
        used.add(c2)
    return matched


def weighted_drift(
    p1: Partition,
    p2: Partition,
    g1: UndirectedGraph,
    min_jaccard: float = JACCARD_MATCH_THRESHOLD,
) -> float:
    """Strength-weighted fraction of common nodes that change community.

    Community identity across snapshots comes from max-overlap (Jaccard)
    matching; node strengths come from the earlier snapshot's graph. Zero
    total strength is reported as 0 with a flag.
    """
    common = set(p1.assignment) & set(p2.assignment)
    strengths = g1.strengths()
    total = sum(strengths.get(v, 0.0) for v in common)
    if total == 0.0:
        logger.info("weighted_drift: zero common strength; reporting 0.0")
        return 0.0
    matched = _match_communities(p1, p2, common, min_jaccard)
    changed = 0.0
    for v in common:
        successor = matched.get(p1.assignment[v])
        if successor is None or p2.assignment[v] != successor:
            changed += strengths.get(v, 0.0)
    return changed / total


@dataclass
class MetricsRow:
    """Per-snapshot diagnostics; nmi_prev / drift_prev are None on the first row."""

    step: int
    q: float
    r: float
    r_w: float
    nmi_prev: float | None
    drift_prev: float | None


def parse_snapshot_obj(obj: dict) -> tuple[int, DirectedGraph]:
    step = int(obj["step"])
    edges = [(str(src), str(dst), float(w)) for src, dst, w in obj["edges"]]
    return step, DirectedGraph.from_edge_list(edges)


def read_snapshot_log(path: str | Path) -> list[tuple[int, DirectedGraph]]:
    """Parse a snapshot JSONL log; malformed lines raise with their line number."""
    path = Path(path)
    snapshots = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                snapshots.append(parse_snapshot_obj(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed snapshot line: {exc}") from None
    return snapshots


def check_monotone_edges(snapshots: Sequence[tuple[int, DirectedGraph]]) -> bool:
    """True iff each snapshot's ordered-pair edge set contains the previous one."""
    previous: set[tuple[str, str]] = set()
    for _, graph in snapshots:
        current = set(graph.edges)
        if not previous <= current:
            return False
        previous = current
    return True


def analyze(
    snapshots: Sequence[tuple[int, DirectedGraph]],
    tau: float = DEFAULT_TAU,
    resolution: float = DEFAULT_RESOLUTION,
    seed: int = DEFAULT_LOUVAIN_SEED,
) -> list[MetricsRow]:
    """Run the full diagnostics over a snapshot sequence.

    Per snapshot: threshold, then reciprocity on the directed graph and
    Louvain modularity on the symmetrized graph. Per adjacent pair: NMI and
    weighted drift over nodes that are non-isolated in both snapshots.
    """
    rows: list[MetricsRow] = []
    prev_partition: Partition | None = None
    prev_active: set[str] = set()
    prev_graph: UndirectedGraph | None = None
    for step, g in snapshots:
        gt = threshold(g, tau)
        r, r_w = reciprocity(gt)
        und = symmetrize(gt)
        partition = louvain(und, resolution=resolution, seed=seed)
        q = modularity(und, partition)
        active = und.active_nodes()
        nmi_prev = drift_prev = None
        if prev_partition is not None:
            common = prev_active & active
            if common:
                nmi_prev = nmi(prev_partition.restricted(common), partition.restricted(common))
                drift_prev = weighted_drift(prev_partition, partition, prev_graph)
            else:
                logger.warning("step %d: no common non-isolated nodes; NMI/drift omitted", step)
        rows.append(MetricsRow(step, q, r, r_w, nmi_prev, drift_prev))
        prev_partition = partition
        prev_active = active
        prev_graph = und
    return rows


def write_metrics_csv(rows: Sequence[MetricsRow], path: str | Path) -> None:
    """Write the metrics table: 6 decimal places, empty cells where absent."""

    def cell(v: float | None) -> str:
        return "" if v is None else f"{v:.6f}"

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,q,r,r_w,nmi_prev,drift_prev\n")
        for row in rows:
            fh.write(
                f"{row.step},{cell(row.q)},{cell(row.r)},{cell(row.r_w)},"
                f"{cell(row.nmi_prev)},{cell(row.drift_prev)}\n"
            )


def summarize(rows: Sequence[MetricsRow]) -> dict[str, float | None]:
    """Final Q / r / r_w and the means of the adjacent-pair metrics."""
    if not rows:
        return {"final_q": None, "final_r": None, "final_r_w": None, "mean_nmi": None, "mean_drift": None}
    nmis = [row.nmi_prev for row in rows if row.nmi_prev is not None]
    drifts = [row.drift_prev for row in rows if row.drift_prev is not None]
    last = rows[-1]
    return {
        "final_q": last.q,
        "final_r": last.r,
        "final_r_w": last.r_w,
        "mean_nmi": sum(nmis) / len(nmis) if nmis else None,
        "mean_drift": sum(drifts) / len(drifts) if drifts else None,
    }


# --- synthetic validation inputs -------------------------------------------

SYNTHETIC_WEIGHT = 0.8
REWIRE_SEED = 20250213


def planted_groups(n_agents: int = 25, n_communities: int = 3) -> list[list[str]]:
    """Near-equal contiguous groups of synthetic agent names."""
    names = [f"agent_{i:02d}" for i in range(n_agents)]
    base, extra = divmod(n_agents, n_communities)
    groups = []
    cursor = 0
    for i in range(n_communities):
        size = base + (1 if i < extra else 0)
        groups.append(names[cursor : cursor + size])
        cursor += size
    return groups


def _clique_edges(groups: list[list[str]], weight: float) -> list[list]:
    edges = []
    for members in groups:
        for u in members:
            for v in members:
                if u != v:
                    edges.append([u, v, weight])
    edges.sort(key=lambda e: (e[0], e[1]))
    return edges


def synthetic_stable_log(
    n_agents: int = 25,
    n_communities: int = 3,
    n_snapshots: int = 10,
    weight: float = SYNTHETIC_WEIGHT,
) -> list[dict]:
    """Perfect-stability fixture: the same planted mutual cliques repeated at
    every snapshot. Every adjacent pair must score NMI 1 and drift 0."""
    edges = _clique_edges(planted_groups(n_agents, n_communities), weight)
    return [{"step": t, "edges": edges} for t in range(1, n_snapshots + 1)]


def synthetic_rewired_log(
    n_agents: int = 25,
    n_communities: int = 3,
    n_snapshots: int = 10,
    weight: float = SYNTHETIC_WEIGHT,
    rewire_step: int = 6,
    seed: int = REWIRE_SEED,
) -> list[dict]:
    """Complete-rewiring fixture: all intra-community edges are reassigned to
    a seeded shuffle of the agents starting at rewire_step, destroying the
    original community structure at that boundary."""
    groups = planted_groups(n_agents, n_communities)
    names = [name for group in groups for name in group]
    shuffled = list(names)
    random.Random(seed).shuffle(shuffled)
    rewired_groups = []
    cursor = 0
    for group in groups:
        rewired_groups.append(shuffled[cursor : cursor + len(group)])
        cursor += len(group)
    before = _clique_edges(groups, weight)
    after = _clique_edges(rewired_groups, weight)
    return [
        {"step": t, "edges": before if t < rewire_step else after}
        for t in range(1, n_snapshots + 1)
    ]
