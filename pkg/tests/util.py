"""Shared test oracles: brute-force graph enumeration and the Asia truth graph."""

from __future__ import annotations

import itertools

from c2bm.graphs import MixedGraph, topological_order

ASIA_NAMES = ["asia", "tub", "smoke", "lung", "bronc", "either", "xray", "dysp"]
ASIA_EDGES = [
    ("asia", "tub"),
    ("smoke", "lung"),
    ("smoke", "bronc"),
    ("tub", "either"),
    ("lung", "either"),
    ("either", "xray"),
    ("bronc", "dysp"),
    ("either", "dysp"),
]


def asia_truth() -> MixedGraph:
    idx = {n: i for i, n in enumerate(ASIA_NAMES)}
    return MixedGraph(
        8, directed=[(idx[a], idx[b]) for a, b in ASIA_EDGES], names=ASIA_NAMES
    )


def all_dags(n: int):
    """Every labelled DAG on n nodes (use only for n <= 4/5)."""
    pairs = list(itertools.combinations(range(n), 2))
    for marks in itertools.product((0, 1, 2), repeat=len(pairs)):
        directed = []
        for (i, j), m in zip(pairs, marks):
            if m == 1:
                directed.append((i, j))
            elif m == 2:
                directed.append((j, i))
        g = MixedGraph(n, directed=directed)
        try:
            topological_order(g)
        except Exception:
            continue
        yield g


def skeleton(g: MixedGraph) -> frozenset:
    sk = {(min(i, j), max(i, j)) for i, j in g.directed}
    sk |= set(g.undirected)
    return frozenset(sk)


def v_structures(g: MixedGraph) -> frozenset:
    out = set()
    for j in range(g.node_count):
        ps = sorted(g.parents(j))
        for a, b in itertools.combinations(ps, 2):
            if not g.adjacent(a, b):
                out.add((a, j, b))
    return frozenset(out)


def cpdag_by_enumeration(g: MixedGraph) -> MixedGraph:
    """CPDAG via brute force: enumerate all DAGs sharing skeleton+v-structures."""
    sk, vs = skeleton(g), v_structures(g)
    members = [d for d in all_dags(g.node_count)
               if skeleton(d) == sk and v_structures(d) == vs]
    directed = set()
    undirected = set()
    for i, j in sk:
        fwd = any(d.has_directed(i, j) for d in members)
        rev = any(d.has_directed(j, i) for d in members)
        if fwd and rev:
            undirected.add((i, j))
        elif fwd:
            directed.add((i, j))
        else:
            directed.add((j, i))
    return MixedGraph(g.node_count, directed, undirected, g.names)
