"""Regenerate the bundled non-Asia network files.

asia.bif carries the exact published conditional probability tables and is
maintained by hand. sachs.bif uses the consensus 11-node / 17-edge protein
signalling structure with synthesized tables (the original discretized tables
are not redistributable here). insurance/alarm/hailfinder are synthetic
stand-ins matching the published node and edge counts, for scale testing.

Run from the repo root: python3 tools/generate_networks.py
"""

from __future__ import annotations

import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "src" / "c2bm" / "data" / "networks"

SACHS_NODES = ["Akt", "Erk", "Jnk", "Mek", "P38", "PIP2", "PIP3", "PKA", "PKC", "Plcg", "Raf"]
SACHS_EDGES = [
    ("Erk", "Akt"), ("PKA", "Akt"),
    ("Mek", "Erk"), ("PKA", "Erk"),
    ("PKA", "Jnk"), ("PKC", "Jnk"),
    ("PKA", "Mek"), ("PKC", "Mek"), ("Raf", "Mek"),
    ("PKA", "P38"), ("PKC", "P38"),
    ("Plcg", "PIP2"), ("PIP3", "PIP2"),
    ("Plcg", "PIP3"),
    ("PKA", "Raf"), ("PKC", "Raf"),
    ("PKC", "PKA"),
]


def format_row(p: np.ndarray) -> str:
    vals = np.round(p, 6)
    vals[-1] = round(1.0 - vals[:-1].sum(), 6)  # rows must sum to exactly 1
    return ", ".join(f"{v:.6f}" for v in vals)


def random_cpt(rng, card: int, parent_cards: list[int], strength: float) -> np.ndarray:
    """Softmax of summed per-parent random effects; strong, faithful rows."""
    rows = int(np.prod(parent_cards)) if parent_cards else 1
    if not parent_cards:
        base = rng.dirichlet(np.full(card, 5.0))
        return base[None, :]
    effects = [rng.normal(0.0, strength, size=(pc, card)) for pc in parent_cards]
    cpt = np.zeros((rows, card))
    for r in range(rows):
        idx, rem = [], r
        for pc in reversed(parent_cards):
            idx.append(rem % pc)
            rem //= pc
        idx.reverse()
        logits = rng_free_bias + sum(eff[i] for eff, i in zip(effects, idx))
        e = np.exp(logits - logits.max())
        cpt[r] = e / e.sum()
    return cpt


rng_free_bias = 0.0  # placeholder; per-node bias set inside generate()


def write_bif(path, name, nodes, cards, states, parents, cpts):
    lines = [f"network {name} {{", "}"]
    for v, card in zip(nodes, cards):
        lines.append(f"variable {v} {{")
        lines.append(f"  type discrete [ {card} ] {{ " + ", ".join(states[v]) + " };")
        lines.append("}")
    for i, v in enumerate(nodes):
        ps = parents[v]
        if not ps:
            lines.append(f"probability ( {v} ) {{")
            lines.append(f"  table {format_row(cpts[v][0])};")
        else:
            lines.append(f"probability ( {v} | " + ", ".join(ps) + " ) {")
            pcards = [cards[nodes.index(p)] for p in ps]
            for r in range(cpts[v].shape[0]):
                idx, rem = [], r
                for pc in reversed(pcards):
                    idx.append(rem % pc)
                    rem //= pc
                idx.reverse()
                key = ", ".join(states[p][k] for p, k in zip(ps, idx))
                lines.append(f"  ({key}) {format_row(cpts[v][r])};")
        lines.append("}")
    path.write_text("\n".join(lines) + "\n")


def generate_sachs():
    global rng_free_bias
    rng = np.random.Generator(np.random.PCG64(20240301))
    nodes = SACHS_NODES
    cards = [3] * len(nodes)
    states = {v: ["LOW", "AVG", "HIGH"] for v in nodes}
    parents = {v: [a for a, b in SACHS_EDGES if b == v] for v in nodes}
    cpts = {}
    for i, v in enumerate(nodes):
        rng_free_bias = rng.normal(0.0, 0.3, size=3)
        pcards = [3] * len(parents[v])
        cpts[v] = random_cpt(rng, 3, pcards, strength=1.6)
    write_bif(OUT / "sachs.bif", "sachs", nodes, cards, states, parents, cpts)


def generate_standin(name: str, n_nodes: int, n_edges: int, seed: int):
    global rng_free_bias
    rng = np.random.Generator(np.random.PCG64(seed))
    nodes = [f"{name}_{i:02d}" for i in range(n_nodes)]
    # random DAG with exact edge count, max in-degree 3
    all_pairs = [(i, j) for j in range(n_nodes) for i in range(j)]
    rng.shuffle(all_pairs)
    indeg = [0] * n_nodes
    edges = []
    for i, j in all_pairs:
        if len(edges) == n_edges:
            break
        if indeg[j] < 3:
            edges.append((i, j))
            indeg[j] += 1
    assert len(edges) == n_edges, f"{name}: could not place {n_edges} edges"
    cards = [int(rng.integers(2, 4)) for _ in range(n_nodes)]
    states = {v: [f"s{k}" for k in range(cards[i])] for i, v in enumerate(nodes)}
    parents = {v: [nodes[a] for a, b in edges if b == i] for i, v in enumerate(nodes)}
    cpts = {}
    for i, v in enumerate(nodes):
        rng_free_bias = rng.normal(0.0, 0.3, size=cards[i])
        pcards = [cards[nodes.index(p)] for p in parents[v]]
        cpts[v] = random_cpt(rng, cards[i], pcards, strength=1.4)
    write_bif(OUT / f"{name}.bif", name, nodes, cards, states, parents, cpts)


if __name__ == "__main__":
    generate_sachs()
    generate_standin("insurance", 27, 52, seed=20240302)
    generate_standin("alarm", 37, 46, seed=20240303)
    generate_standin("hailfinder", 56, 66, seed=20240304)
    print("wrote", sorted(p.name for p in OUT.glob("*.bif")))
