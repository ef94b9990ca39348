"""Discrete Bayesian networks: BIF parsing, ancestral sampling, dataset splits.

Networks are immutable after parsing. Sampling uses numpy's PCG64 generator,
so sample streams are bit-identical across platforms for a given seed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .graphs import MixedGraph, topological_order

BUNDLED_NETWORKS = ("asia", "sachs", "insurance", "alarm", "hailfinder")


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class InvalidCpt(Exception):
    pass


class InvalidRatios(Exception):
    pass


@dataclass(frozen=True)
class DiscreteBayesNet:
    graph: MixedGraph
    cardinalities: tuple[int, ...]
    states: tuple[tuple[str, ...], ...]
    parent_order: tuple[tuple[int, ...], ...]  # per node, BIF header order
    cpts: tuple[np.ndarray, ...]  # cpt[i]: (prod parent cards, card_i)

    @property
    def names(self) -> tuple[str, ...]:
        return self.graph.names

    def cpt_row(self, node: int, parent_values: dict[int, int]) -> np.ndarray:
        idx = 0
        for p in self.parent_order[node]:
            idx = idx * self.cardinalities[p] + parent_values[p]
        return self.cpts[node][idx]


def _validate(net: DiscreteBayesNet) -> DiscreteBayesNet:
    for i, cpt in enumerate(net.cpts):
        expected_rows = int(np.prod([net.cardinalities[p] for p in net.parent_order[i]],
                                    dtype=np.int64)) if net.parent_order[i] else 1
        if cpt.shape != (expected_rows, net.cardinalities[i]):
            raise InvalidCpt(
                f"{net.names[i]}: CPT shape {cpt.shape}, expected "
                f"({expected_rows}, {net.cardinalities[i]})"
            )
        sums = cpt.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > 1e-9)[0]
        if bad.size:
            raise InvalidCpt(f"{net.names[i]}: CPT row {bad[0]} sums to {sums[bad[0]]:.6g}")
    topological_order(net.graph)
    return net


# ---------------------------------------------------------------------------
# BIF subset parser


class _Tok:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, msg: str):
        raise ParseError(msg, self.line, self.col)

    def _advance(self, n: int):
        chunk = self.text[self.pos:self.pos + n]
        self.line += chunk.count("\n")
        last_nl = chunk.rfind("\n")
        if last_nl >= 0:
            self.col = n - last_nl
        else:
            self.col += n
        self.pos += n

    def skip_ws(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self._advance(1)
            elif self.text.startswith("//", self.pos):
                end = self.text.find("\n", self.pos)
                self._advance((end if end >= 0 else len(self.text)) - self.pos)
            else:
                break

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def eat(self, lit: str):
        self.skip_ws()
        if not self.text.startswith(lit, self.pos):
            self.error(f"expected {lit!r}")
        self._advance(len(lit))

    def word(self) -> str:
        self.skip_ws()
        m = re.match(r"[A-Za-z0-9_.\-]+", self.text[self.pos:])
        if not m:
            self.error("expected identifier")
        self._advance(m.end())
        return m.group()

    def number(self) -> float:
        self.skip_ws()
        m = re.match(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?", self.text[self.pos:])
        if not m:
            self.error("expected number")
        self._advance(m.end())
        return float(m.group())

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_network(text: str) -> DiscreteBayesNet:
    """Parse the BIF subset: network / variable / probability blocks."""
    tok = _Tok(text)
    tok.eat("network")
    tok.word()
    tok.eat("{")
    tok.eat("}")

    names: list[str] = []
    states: list[tuple[str, ...]] = []
    index: dict[str, int] = {}

    while tok.peek() == "v" and tok.text.startswith("variable", tok.pos):
        tok.eat("variable")
        name = tok.word()
        if name in index:
            tok.error(f"duplicate variable {name!r}")
        tok.eat("{")
        tok.eat("type")
        tok.eat("discrete")
        tok.eat("[")
        card = int(tok.number())
        tok.eat("]")
        tok.eat("{")
        labels = [tok.word()]
        while tok.peek() == ",":
            tok.eat(",")
            labels.append(tok.word())
        tok.eat("}")
        tok.eat(";")
        tok.eat("}")
        if card < 2:
            tok.error(f"{name}: cardinality must be >= 2")
        if len(labels) != card:
            tok.error(f"{name}: {len(labels)} states but cardinality {card}")
        index[name] = len(names)
        names.append(name)
        states.append(tuple(labels))

    n = len(names)
    cards = [len(s) for s in states]
    parent_order: list[tuple[int, ...] | None] = [None] * n
    cpts: list[np.ndarray | None] = [None] * n
    edges: list[tuple[int, int]] = []

    def lookup(name: str) -> int:
        if name not in index:
            tok.error(f"unknown variable {name!r}")
        return index[name]

    while not tok.at_end():
        tok.eat("probability")
        tok.eat("(")
        child = lookup(tok.word())
        parents: list[int] = []
        if tok.peek() == "|":
            tok.eat("|")
            parents.append(lookup(tok.word()))
            while tok.peek() == ",":
                tok.eat(",")
                parents.append(lookup(tok.word()))
        tok.eat(")")
        tok.eat("{")
        if cpts[child] is not None:
            tok.error(f"duplicate probability block for {names[child]!r}")

        ccard = cards[child]
        if not parents:
            tok.eat("table")
            row = [tok.number()]
            while tok.peek() == ",":
                tok.eat(",")
                row.append(tok.number())
            tok.eat(";")
            table = np.array([row], dtype=np.float64)
        else:
            rows = int(np.prod([cards[p] for p in parents], dtype=np.int64))
            table = np.full((rows, ccard), np.nan)
            while tok.peek() == "(":
                tok.eat("(")
                svals = [tok.word()]
                while tok.peek() == ",":
                    tok.eat(",")
                    svals.append(tok.word())
                tok.eat(")")
                if len(svals) != len(parents):
                    tok.error("parent state tuple arity mismatch")
                ridx = 0
                for p, sv in zip(parents, svals):
                    if sv not in states[p]:
                        tok.error(f"unknown state {sv!r} for {names[p]!r}")
                    ridx = ridx * cards[p] + states[p].index(sv)
                row = [tok.number()]
                while tok.peek() == ",":
                    tok.eat(",")
                    row.append(tok.number())
                tok.eat(";")
                if len(row) != ccard:
                    tok.error(f"row has {len(row)} entries, expected {ccard}")
                table[ridx] = row
            if np.isnan(table).any():
                tok.error(f"missing CPT rows for {names[child]!r}")
        tok.eat("}")
        parent_order[child] = tuple(parents)
        cpts[child] = table
        edges.extend((p, child) for p in parents)

    for i in range(n):
        if cpts[i] is None:
            raise InvalidCpt(f"{names[i]}: no probability block")

    net = DiscreteBayesNet(
        graph=MixedGraph(n, directed=edges, names=names),
        cardinalities=tuple(cards),
        states=tuple(states),
        parent_order=tuple(parent_order),  # type: ignore[arg-type]
        cpts=tuple(cpts),  # type: ignore[arg-type]
    )
    return _validate(net)


def load_bundled(name: str) -> DiscreteBayesNet:
    if name not in BUNDLED_NETWORKS:
        raise KeyError(f"unknown network {name!r}; available: {BUNDLED_NETWORKS}")
    text = resources.files("c2bm.data.networks").joinpath(f"{name}.bif").read_text()
    return parse_network(text)


# ---------------------------------------------------------------------------
# Sampling


def ancestral_sample(net: DiscreteBayesNet, n: int, seed: int) -> np.ndarray:
    """Draw n joint samples in topological order. Returns (n, C) int array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = topological_order(net.graph)
    values = np.zeros((n, net.graph.node_count), dtype=np.int64)
    for v in order:
        parents = net.parent_order[v]
        if parents:
            ridx = np.zeros(n, dtype=np.int64)
            for p in parents:
                ridx = ridx * net.cardinalities[p] + values[:, p]
            probs = net.cpts[v][ridx]
        else:
            probs = np.broadcast_to(net.cpts[v][0], (n, net.cardinalities[v]))
        u = rng.random(n)
        cum = np.cumsum(probs, axis=1)
        values[:, v] = (u[:, None] >= cum[:, :-1]).sum(axis=1)
    return values


def split_dataset(
    samples: np.ndarray, ratios: tuple[float, float, float], seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint (train, val, test) index partition; remainder goes to train."""
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatios(f"ratios must be positive and sum to 1, got {ratios}")
    n = len(samples)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


def samples_to_csv(net: DiscreteBayesNet, samples: np.ndarray) -> str:
    lines = [",".join(net.names)]
    lines.extend(",".join(str(int(x)) for x in row) for row in samples)
    return "\n".join(lines) + "\n"


def samples_from_csv(text: str) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in text.strip().split("\n") if ln]
    header = lines[0].split(",")
    data = np.array([[int(x) for x in ln.split(",")] for ln in lines[1:]], dtype=np.int64)
    return header, data
