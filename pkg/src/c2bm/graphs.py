"""Graph representations shared by discovery, the model, and evaluation.

A :class:`MixedGraph` holds directed and undirected edges over a dense node
index set and covers DAGs, PDAGs, and CPDAGs. All instances are immutable
after construction, so they are safe to share across threads.
"""

from __future__ import annotations

import heapq
import json
from fractions import Fraction
from typing import Iterable, Sequence


class GraphError(Exception):
    pass


class CycleDetected(GraphError):
    pass


class InconsistentPdag(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class NodeCountMismatch(GraphError):
    pass


class MixedGraph:
    """Graph with directed and undirected edge marks over nodes 0..n-1."""

    __slots__ = ("node_count", "names", "directed", "undirected", "_adj")

    def __init__(
        self,
        node_count: int,
        directed: Iterable[tuple[int, int]] = (),
        undirected: Iterable[tuple[int, int]] = (),
        names: Sequence[str] | None = None,
    ):
        self.node_count = node_count
        if names is None:
            names = [f"v{i}" for i in range(node_count)]
        if len(names) != node_count or len(set(names)) != node_count:
            raise GraphError("names must be unique, one per node")
        self.names = tuple(names)

        d = set()
        for i, j in directed:
            self._check(i), self._check(j)
            if i == j:
                raise GraphError(f"self-loop at {i}")
            d.add((i, j))
        u = set()
        for i, j in undirected:
            self._check(i), self._check(j)
            if i == j:
                raise GraphError(f"self-loop at {i}")
            u.add((min(i, j), max(i, j)))
        for i, j in u:
            if (i, j) in d or (j, i) in d:
                raise GraphError(f"pair ({i},{j}) in both edge sets")
        self.directed = frozenset(d)
        self.undirected = frozenset(u)

        adj: list[set[int]] = [set() for _ in range(node_count)]
        for i, j in self.directed:
            adj[i].add(j)
            adj[j].add(i)
        for i, j in self.undirected:
            adj[i].add(j)
            adj[j].add(i)
        self._adj = tuple(frozenset(s) for s in adj)

    def _check(self, i: int) -> None:
        if not (0 <= i < self.node_count):
            raise UnknownNode(f"node {i} out of range")

    # -- basic queries ----------------------------------------------------

    def parents(self, j: int) -> set[int]:
        self._check(j)
        return {i for i, k in self.directed if k == j}

    def children(self, i: int) -> set[int]:
        self._check(i)
        return {k for h, k in self.directed if h == i}

    def neighbors_undirected(self, i: int) -> set[int]:
        self._check(i)
        return {j for j in range(self.node_count) if self.has_undirected(i, j)}

    def adjacent(self, i: int, j: int) -> bool:
        return j in self._adj[i]

    def has_directed(self, i: int, j: int) -> bool:
        return (i, j) in self.directed

    def has_undirected(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.undirected

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownNode(name) from None

    def is_dag(self) -> bool:
        if self.undirected:
            return False
        try:
            topological_order(self)
            return True
        except CycleDetected:
            return False

    def with_nodes_renamed(self, names: Sequence[str]) -> "MixedGraph":
        return MixedGraph(self.node_count, self.directed, self.undirected, names)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MixedGraph)
            and self.node_count == other.node_count
            and self.directed == other.directed
            and self.undirected == other.undirected
        )

    def __hash__(self):
        return hash((self.node_count, self.directed, self.undirected))

    def __repr__(self):
        return (
            f"MixedGraph(n={self.node_count}, directed={sorted(self.directed)}, "
            f"undirected={sorted(self.undirected)})"
        )

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "nodes": list(self.names),
            "directed": sorted([list(e) for e in self.directed]),
            "undirected": sorted([list(e) for e in self.undirected]),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MixedGraph":
        doc = json.loads(text)
        return cls(
            len(doc["nodes"]),
            directed=[tuple(e) for e in doc["directed"]],
            undirected=[tuple(e) for e in doc.get("undirected", [])],
            names=doc["nodes"],
        )


def topological_order(g: MixedGraph) -> list[int]:
    """Kahn's algorithm; ties broken by ascending node index."""
    if g.undirected:
        raise GraphError("graph has undirected edges")
    indeg = [0] * g.node_count
    for _, j in g.directed:
        indeg[j] += 1
    ready = [i for i in range(g.node_count) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    children = [sorted(g.children(i)) for i in range(g.node_count)]
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != g.node_count:
        raise CycleDetected("directed cycle present")
    return order


def ancestors_of(g: MixedGraph, target: int) -> set[int]:
    """Strict ancestors of ``target`` (transitive closure of the parent relation)."""
    g._check(target)
    if g.undirected:
        raise GraphError("graph has undirected edges")
    topological_order(g)  # raises CycleDetected on cyclic input
    out: set[int] = set()
    stack = list(g.parents(target))
    while stack:
        v = stack.pop()
        if v in out:
            continue
        out.add(v)
        stack.extend(g.parents(v))
    return out


def depth_levels(g: MixedGraph) -> dict[int, int]:
    """Longest-path depth: 0 for roots, else 1 + max over parents."""
    order = topological_order(g)
    level = {}
    for v in order:
        ps = g.parents(v)
        level[v] = 0 if not ps else 1 + max(level[p] for p in ps)
    return level


def _directed_part_acyclic(directed: set[tuple[int, int]], n: int) -> bool:
    indeg = [0] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for i, j in directed:
        indeg[j] += 1
        children[i].append(j)
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen == n


def apply_meek_rules(g: MixedGraph) -> MixedGraph:
    """Close a PDAG under Meek rules R1-R4."""
    directed = set(g.directed)
    undirected = set(g.undirected)
    if not _directed_part_acyclic(directed, g.node_count):
        raise InconsistentPdag("directed part of input is cyclic")

    def adjacent(a, b):
        return (a, b) in directed or (b, a) in directed or (min(a, b), max(a, b)) in undirected

    def orient(a, b):
        undirected.discard((min(a, b), max(a, b)))
        directed.add((a, b))

    changed = True
    while changed:
        changed = False
        for a, b in list(undirected):
            for x, y in ((a, b), (b, a)):
                # R1: z -> x, x - y, z and y nonadjacent  =>  x -> y
                if any((z, x) in directed and not adjacent(z, y)
                       for z in range(g.node_count) if z not in (x, y)):
                    orient(x, y)
                    changed = True
                    break
                # R2: x -> w -> y and x - y  =>  x -> y
                if any((x, w) in directed and (w, y) in directed
                       for w in range(g.node_count)):
                    orient(x, y)
                    changed = True
                    break
                # R3: x - z1, x - z2, z1 -> y, z2 -> y, z1,z2 nonadjacent  =>  x -> y
                zs = [z for z in range(g.node_count)
                      if (min(x, z), max(x, z)) in undirected and (z, y) in directed]
                if any(not adjacent(z1, z2)
                       for i1, z1 in enumerate(zs) for z2 in zs[i1 + 1:]):
                    orient(x, y)
                    changed = True
                    break
                # R4: x - z, z -> w, w -> y, z and y nonadjacent,
                #     x adjacent to w  =>  x -> y
                if any((min(x, z), max(x, z)) in undirected
                       and (z, w) in directed and (w, y) in directed
                       and not adjacent(z, y) and adjacent(x, w)
                       for z in range(g.node_count) for w in range(g.node_count)
                       if z not in (x, y) and w not in (x, y, z)):
                    orient(x, y)
                    changed = True
                    break
            if changed:
                break
    if not _directed_part_acyclic(directed, g.node_count):
        raise InconsistentPdag("Meek completion forced a directed cycle")
    return MixedGraph(g.node_count, directed, undirected, g.names)


def dag_to_cpdag(g: MixedGraph) -> MixedGraph:
    """Completed PDAG of the Markov equivalence class of a DAG.

    Chickering-style compelled-edge labeling: order edges, then mark each as
    compelled or reversible.
    """
    order = topological_order(g)  # raises on cycles / undirected edges
    pos = {v: k for k, v in enumerate(order)}

    # order the edges: by child position, then by reversed parent position
    edges = sorted(g.directed, key=lambda e: (pos[e[1]], -pos[e[0]]))
    label: dict[tuple[int, int], str] = {}

    for x, y in edges:
        if (x, y) in label:
            continue
        done = False
        # step: for every w -> x compelled
        for w in sorted(g.parents(x), key=lambda w: pos[w]):
            if label.get((w, x)) == "compelled":
                if not g.has_directed(w, y):
                    for p in g.parents(y):
                        label[(p, y)] = "compelled"
                    done = True
                    break
                else:
                    label[(w, y)] = "compelled"
        if done:
            continue
        # if exists z -> y with z != x and z not a parent of x: all compelled
        if any(z != x and not g.has_directed(z, x) for z in g.parents(y)):
            for p in g.parents(y):
                if (p, y) not in label:
                    label[(p, y)] = "compelled"
        else:
            for p in g.parents(y):
                if (p, y) not in label:
                    label[(p, y)] = "reversible"

    directed = {e for e in g.directed if label.get(e) == "compelled"}
    undirected = {(min(i, j), max(i, j)) for i, j in g.directed
                  if label.get((i, j)) == "reversible"}
    return MixedGraph(g.node_count, directed, undirected, g.names)


# Penalty table for edge-status discrepancies, per unordered node pair.
# Keys: (truth status, predicted status) where status is one of
# "none", "fwd", "rev" (direction relative to the truth edge) or "und".
_SHD_PENALTY = {
    ("none", "dir"): Fraction(1),
    ("none", "und"): Fraction(1, 2),
    ("fwd", "rev"): Fraction(1, 3),
    ("fwd", "none"): Fraction(1, 4),
    ("und", "none"): Fraction(1, 4),
    ("und", "dir"): Fraction(1, 4),
    ("fwd", "und"): Fraction(1, 5),
}


def _pair_status(g: MixedGraph, i: int, j: int) -> str:
    if g.has_directed(i, j):
        return "ij"
    if g.has_directed(j, i):
        return "ji"
    if g.has_undirected(i, j):
        return "und"
    return "none"


def structural_hamming(truth: MixedGraph, predicted: MixedGraph) -> Fraction:
    """Weighted per-pair edge-discrepancy score (exact rational)."""
    if truth.node_count != predicted.node_count:
        raise NodeCountMismatch()
    total = Fraction(0)
    n = truth.node_count
    for i in range(n):
        for j in range(i + 1, n):
            t = _pair_status(truth, i, j)
            p = _pair_status(predicted, i, j)
            if t == p:
                continue
            if t == "none":
                total += _SHD_PENALTY[("none", "und" if p == "und" else "dir")]
            elif t == "und":
                total += _SHD_PENALTY[("und", "none" if p == "none" else "dir")]
            else:  # truth directed
                if p == "none":
                    total += _SHD_PENALTY[("fwd", "none")]
                elif p == "und":
                    total += _SHD_PENALTY[("fwd", "und")]
                else:  # directed the other way
                    total += _SHD_PENALTY[("fwd", "rev")]
    return total


def mistaken_edges(truth: MixedGraph, predicted: MixedGraph) -> int:
    """Count of node pairs whose edge status differs between the two graphs."""
    if truth.node_count != predicted.node_count:
        raise NodeCountMismatch()
    n = truth.node_count
    return sum(
        1
        for i in range(n)
        for j in range(i + 1, n)
        if _pair_status(truth, i, j) != _pair_status(predicted, i, j)
    )


def flat_cbm_graph(concepts: set[int], task: int, node_count: int,
                   names: Sequence[str] | None = None) -> MixedGraph:
    """Bipartite graph: every concept an independent direct cause of the task."""
    if task in concepts:
        raise GraphError("task must not be a concept")
    return MixedGraph(node_count, directed=[(c, task) for c in concepts], names=names)
