"""Test-time interventions, intervention-curve evaluation, and causal-effect
metrics.

An intervention plan clamps a chosen set of concept nodes to their ground
truth (or to arbitrary do-values) before propagation.  Level policies pick
nodes by their depth in the causal graph, so curves can show how accuracy
responds as interventions reach progressively deeper levels.  CaCE measures
how strongly forcing a binary concept moves a target's positive-class
probability, and its blocked variant re-measures after clamping a mediator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bayesnet import DiscreteBayesNet
from .graphs import MixedGraph, depth_levels


class NonBinaryConcept(Exception):
    """CaCE is defined for binary concepts and targets only."""


@dataclass(frozen=True)
class InterventionPlan:
    """Which nodes to clamp; values come from ground truth at evaluation
    time unless ``values`` pins explicit do-values."""

    nodes: tuple[int, ...]
    level: int | None = None
    values: dict[int, int] | None = None


@dataclass
class EvalReport:
    """Aggregated evaluation results, serializable for the report file."""

    node_accuracy: dict[str, float] = field(default_factory=dict)
    task_accuracy: float = 0.0
    mean_label_accuracy: float = 0.0
    curve: list[dict] = field(default_factory=list)
    cace: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "node_accuracy": self.node_accuracy,
            "task_accuracy": self.task_accuracy,
            "mean_label_accuracy": self.mean_label_accuracy,
            "curve": self.curve,
            "cace": self.cace,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def level_policy(graph: MixedGraph, level: int, fraction: float = 1.0,
                 seed: int = 0, task: int | None = None) -> InterventionPlan:
    """Random subset of nodes whose depth is at most ``level``.

    Depth is the longest directed path from any root.  The task node is
    never clamped.  ``fraction`` is the inclusion probability per eligible
    node; 1.0 takes all of them.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    depths = depth_levels(graph)
    eligible = [v for v in range(graph.node_count)
                if depths[v] <= level and v != task]
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = tuple(v for v in eligible if rng.random() < fraction)
    return InterventionPlan(nodes=chosen, level=level)


def _plan_clamps(plan: InterventionPlan, concepts: np.ndarray) -> dict:
    clamps = {}
    for v in plan.nodes:
        if plan.values and v in plan.values:
            clamps[v] = np.full(concepts.shape[0], plan.values[v])
        else:
            clamps[v] = concepts[:, v]
    return clamps


def evaluate_with_interventions(model, x: np.ndarray, concepts: np.ndarray,
                                plans=()) -> EvalReport:
    """Accuracy of every node's argmax prediction, plain and under plans.

    The report's headline numbers come from the un-intervened forward pass;
    each plan contributes one curve point whose mean label accuracy covers
    all nodes it did not clamp (task included).
    """
    cfg = model.config
    g = cfg.graph
    concepts = np.asarray(concepts)
    probs = model.predict(x)
    report = EvalReport()
    accs = {}
    for v in range(g.node_count):
        accs[v] = float((probs[v].argmax(axis=-1) == concepts[:, v]).mean())
        report.node_accuracy[g.names[v]] = accs[v]
    report.task_accuracy = accs[cfg.task]
    downstream = [v for v in range(g.node_count)]
    report.mean_label_accuracy = float(np.mean([accs[v] for v in downstream]))

    for plan in plans:
        clamps = _plan_clamps(plan, concepts)
        p = model.predict(x, clamps)
        kept = [v for v in range(g.node_count) if v not in clamps]
        point = {
            "level": plan.level,
            "clamped": [g.names[v] for v in sorted(clamps)],
            "task_accuracy": float(
                (p[cfg.task].argmax(axis=-1) == concepts[:, cfg.task]).mean()),
        }
        if kept:
            point["mean_label_accuracy"] = float(np.mean(
                [(p[v].argmax(axis=-1) == concepts[:, v]).mean() for v in kept]))
        else:
            point["mean_label_accuracy"] = point["task_accuracy"]
        report.curve.append(point)
    return report


def cace(model, x: np.ndarray, concept: int, target: int,
         extra_clamps: dict | None = None) -> float:
    """Causal concept effect: |E p(target=1 | do(concept=1))
    - E p(target=1 | do(concept=0))| averaged over the dataset."""
    cards = model.config.cardinalities
    if cards[concept] != 2 or cards[target] != 2:
        raise NonBinaryConcept(
            f"concept card {cards[concept]}, target card {cards[target]}")
    n = np.asarray(x).shape[0]
    arms = []
    for value in (1, 0):
        clamps = dict(extra_clamps or {})
        clamps[concept] = np.full(n, value)
        arms.append(model.predict(x, clamps)[target][:, 1].mean())
    return float(abs(arms[0] - arms[1]))


def blocked_cace(model, x: np.ndarray, concepts: np.ndarray, concept: int,
                 target: int, mediator: int) -> float:
    """CaCE with the mediator clamped to its ground-truth value in both
    do-arms, severing any influence routed through it."""
    concepts = np.asarray(concepts)
    return cace(model, x, concept, target,
                extra_clamps={mediator: concepts[:, mediator]})


# ---------------------------------------------------------------------------
# Synthetic hiring-bias network


FAIRNESS_NODE_NAMES = ("attractive", "makeup", "lipstick", "pointy_nose",
                       "qualified", "should_be_hired")


def fairness_network(noise: float = 0.05) -> DiscreteBayesNet:
    """Six-node binary network modeling a biased hiring pipeline.

    qualified = (makeup and lipstick) or attractive, should_be_hired =
    qualified and pointy_nose, each flipped with probability ``noise``.
    States are ("no", "yes") with yes = index 1.
    """
    names = FAIRNESS_NODE_NAMES
    graph = MixedGraph(6, directed=[(0, 4), (1, 4), (2, 4), (4, 5), (3, 5)],
                       names=names)
    cards = (2,) * 6
    states = (("no", "yes"),) * 6

    def noisy(rule_yes: bool) -> list[float]:
        p_yes = (1.0 - noise) if rule_yes else noise
        return [1.0 - p_yes, p_yes]

    root = np.array([[0.5, 0.5]])
    qualified_rows = []
    for a in (0, 1):
        for m in (0, 1):
            for l in (0, 1):
                qualified_rows.append(noisy(bool((m and l) or a)))
    hired_rows = []
    for q in (0, 1):
        for p in (0, 1):
            hired_rows.append(noisy(bool(q and p)))

    cpts = (root, root, root, root,
            np.array(qualified_rows), np.array(hired_rows))
    parent_order = ((), (), (), (), (0, 1, 2), (4, 3))
    return DiscreteBayesNet(graph=graph, cardinalities=cards, states=states,
                            parent_order=parent_order, cpts=cpts)
