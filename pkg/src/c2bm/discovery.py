"""Score-based causal discovery: Greedy Equivalence Search over CPDAGs with
the BDeu local score on discrete data.

The search follows Chickering's operator characterization: forward Insert
operators, backward Delete operators, each applied to the PDAG and
re-completed through a consistent extension.
"""

from __future__ import annotations

import itertools
from math import lgamma

import numpy as np

from .graphs import InconsistentPdag, MixedGraph, dag_to_cpdag


class NotACpdag(Exception):
    pass


class BdeuScorer:
    """Decomposable BDeu marginal log-likelihood with a local-score cache."""

    def __init__(self, data: np.ndarray, cardinalities: list[int] | tuple[int, ...],
                 equivalent_sample_size: float = 10.0):
        if equivalent_sample_size <= 0:
            raise ValueError("equivalent_sample_size must be positive")
        self.data = np.asarray(data, dtype=np.int64)
        self.cards = tuple(int(c) for c in cardinalities)
        self.ess = float(equivalent_sample_size)
        self._cache: dict[tuple[int, frozenset[int]], float] = {}

    @property
    def node_count(self) -> int:
        return len(self.cards)

    def local_score(self, node: int, parents: frozenset[int] | set[int]) -> float:
        parents = frozenset(parents)
        if node in parents:
            raise ValueError("node cannot be its own parent")
        key = (node, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit

        r = self.cards[node]
        plist = sorted(parents)
        q = 1
        for p in plist:
            q *= self.cards[p]
        alpha_jk = self.ess / (q * r)
        alpha_j = self.ess / q

        if self.data.shape[0] == 0:
            self._cache[key] = 0.0
            return 0.0

        ridx = np.zeros(self.data.shape[0], dtype=np.int64)
        for p in plist:
            ridx = ridx * self.cards[p] + self.data[:, p]
        combined = ridx * r + self.data[:, node]
        njk = np.bincount(combined, minlength=q * r).reshape(q, r)
        nj = njk.sum(axis=1)

        score = 0.0
        lg_ajk = lgamma(alpha_jk)
        lg_aj = lgamma(alpha_j)
        for j in np.nonzero(nj)[0]:
            score += lg_aj - lgamma(alpha_j + nj[j])
            for k in range(r):
                if njk[j, k]:
                    score += lgamma(alpha_jk + njk[j, k]) - lg_ajk
        self._cache[key] = score
        return score


def bdeu_local_score(scorer: BdeuScorer, node: int, parent_set) -> float:
    return scorer.local_score(node, parent_set)


# ---------------------------------------------------------------------------
# PDAG utilities for GES


def _consistent_extension(g: MixedGraph) -> MixedGraph:
    """Dor-Tarsi: orient undirected edges into a DAG with the same skeleton
    and v-structures. Raises InconsistentPdag when none exists."""
    directed = set(g.directed)
    undirected = set(g.undirected)
    alive = set(range(g.node_count))
    out_directed = {v: set() for v in alive}
    in_directed = {v: set() for v in alive}
    und_nbrs = {v: set() for v in alive}
    for i, j in directed:
        out_directed[i].add(j)
        in_directed[j].add(i)
    for i, j in undirected:
        und_nbrs[i].add(j)
        und_nbrs[j].add(i)

    def adjacent(a, b):
        return b in out_directed[a] or b in in_directed[a] or b in und_nbrs[a]

    result = set(directed)
    while alive:
        found = None
        for v in sorted(alive):
            if out_directed[v] & alive:
                continue
            nbrs = und_nbrs[v] & alive
            others = ((in_directed[v] | und_nbrs[v]) & alive) - {v}
            if all(all(adjacent(w, u) for u in others if u != w) for w in nbrs):
                found = v
                break
        if found is None:
            raise InconsistentPdag("PDAG admits no consistent extension")
        for w in und_nbrs[found] & alive:
            result.add((w, found))
        alive.discard(found)
    return MixedGraph(g.node_count, result, names=g.names)


def _recomplete(g: MixedGraph) -> MixedGraph:
    return dag_to_cpdag(_consistent_extension(g))


def _na(g: MixedGraph, y: int, x: int) -> set[int]:
    """Undirected neighbors of y that are adjacent to x."""
    return {w for w in g.neighbors_undirected(y) if g.adjacent(w, x)}


def _is_clique(g: MixedGraph, nodes: set[int]) -> bool:
    return all(g.adjacent(a, b) for a, b in itertools.combinations(nodes, 2))


def _blocks_all_semidirected(g: MixedGraph, src: int, dst: int, blocked: set[int]) -> bool:
    """True if every semi-directed path src ~> dst passes through `blocked`."""
    if src in blocked:
        return True
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        nxt = g.children(v) | g.neighbors_undirected(v)
        for w in nxt:
            if w == dst:
                return False
            if w not in seen and w not in blocked:
                seen.add(w)
                stack.append(w)
    return True


def _apply_insert(g: MixedGraph, x: int, y: int, t: frozenset[int]) -> MixedGraph:
    directed = set(g.directed) | {(x, y)}
    undirected = set(g.undirected)
    for w in t:
        undirected.discard((min(w, y), max(w, y)))
        directed.add((w, y))
    return _recomplete(MixedGraph(g.node_count, directed, undirected, g.names))


def _apply_delete(g: MixedGraph, x: int, y: int, h: frozenset[int]) -> MixedGraph:
    directed = set(g.directed) - {(x, y)}
    undirected = set(g.undirected) - {(min(x, y), max(x, y))}
    for w in h:
        undirected.discard((min(w, y), max(w, y)))
        directed.add((y, w))
        if (min(w, x), max(w, x)) in undirected:
            undirected.discard((min(w, x), max(w, x)))
            directed.add((x, w))
    return _recomplete(MixedGraph(g.node_count, directed, undirected, g.names))


def ges_search(
    scorer: BdeuScorer,
    node_count: int | None = None,
    max_parents: int = 6,
    max_t: int = 3,
    names=None,
    log: list | None = None,
) -> MixedGraph:
    """Two-phase greedy equivalence search; returns the resulting CPDAG."""
    n = node_count or scorer.node_count
    g = MixedGraph(n, names=names)
    eps = 1e-10

    def parents_of(graph, v):
        return frozenset(graph.parents(v))

    # ---- forward phase ----
    while True:
        best = None  # (delta, x, y, t)
        for y in range(n):
            pa_y = parents_of(g, y)
            for x in range(n):
                if x == y or g.adjacent(x, y):
                    continue
                na = _na(g, y, x)
                t_candidates = sorted(g.neighbors_undirected(y) - {x})
                t_candidates = [w for w in t_candidates if not g.adjacent(w, x)]
                for size in range(0, min(max_t, len(t_candidates)) + 1):
                    for combo in itertools.combinations(t_candidates, size):
                        t = frozenset(combo)
                        cond = na | t
                        new_pa = pa_y | cond | {x}
                        if len(new_pa) > max_parents:
                            continue
                        if not _is_clique(g, cond):
                            continue
                        if not _blocks_all_semidirected(g, y, x, cond):
                            continue
                        delta = scorer.local_score(y, new_pa) - scorer.local_score(
                            y, pa_y | cond
                        )
                        key = (delta, -x, -y, -sum(1 << w for w in t))
                        if delta > eps and (best is None or key > best[0]):
                            best = (key, x, y, t, delta)
        if best is None:
            break
        _, x, y, t, delta = best
        g = _apply_insert(g, x, y, t)
        if log is not None:
            log.append(("insert", x, y, sorted(t), delta))

    # ---- backward phase ----
    while True:
        best = None
        for y in range(n):
            pa_y = parents_of(g, y)
            xs = sorted(pa_y | g.neighbors_undirected(y))
            for x in xs:
                na = _na(g, y, x)
                h_candidates = sorted(na)
                for size in range(0, min(max_t, len(h_candidates)) + 1):
                    for combo in itertools.combinations(h_candidates, size):
                        h = frozenset(combo)
                        if not _is_clique(g, na - h):
                            continue
                        keep = (pa_y | (na - h)) - {x}
                        delta = scorer.local_score(y, keep) - scorer.local_score(
                            y, keep | {x}
                        )
                        key = (delta, -x, -y, -sum(1 << w for w in h))
                        if delta > eps and (best is None or key > best[0]):
                            best = (key, x, y, h, delta)
        if best is None:
            break
        _, x, y, h, delta = best
        g = _apply_delete(g, x, y, h)
        if log is not None:
            log.append(("delete", x, y, sorted(h), delta))

    return g


def score_cpdag(scorer: BdeuScorer, g: MixedGraph) -> float:
    """Total BDeu score of any consistent DAG extension of a CPDAG."""
    try:
        dag = _consistent_extension(g)
    except InconsistentPdag as e:
        raise NotACpdag(str(e)) from e
    if dag_to_cpdag(dag) != g:
        raise NotACpdag("graph is not a completed PDAG")
    return sum(
        scorer.local_score(v, frozenset(dag.parents(v))) for v in range(g.node_count)
    )
