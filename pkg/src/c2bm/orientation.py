"""Refinement of a CPDAG via an external knowledge oracle.

Undirected edges left by score-based discovery are resolved by asking an
oracle (an LLM endpoint in production, a deterministic lookup table in tests)
which direction a causal relationship runs, or whether the edge is spurious.
Each edge is voted on several times and the modal verdict is applied:
orientations are propagated with the Meek rules after every accepted edge,
and any orientation that would introduce a directed cycle demotes the edge
to "no relation" (it is dropped).
"""

from __future__ import annotations

import json
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .discovery import BdeuScorer
from .graphs import CycleDetected, InconsistentPdag, MixedGraph, apply_meek_rules

DEFAULT_PROMPT = """\
You are an expert in causal inference and logical analysis.
I will provide you with two concepts and you have to infer the causal relationship between them.
**Concept 1:** {concept_1} - {concept_1_description}
**Concept 2:** {concept_2} - {concept_2_description}

Now, use your knowledge and, if available, the context provided, to determine
which of the following options is the correct one:
(A) changing {concept_1} to certain values result in a change in {concept_2};
(B) changing {concept_2} to certain values result in a change in {concept_1};
(C) there is no causal relationship or reciprocal influence between {concept_1} and {concept_2}.

The following information are extracted from recent and reliable sources:
{context}

The answer has to be enclosed within <answer> tags (e.g. <answer>A</answer>).
Analyze the situation step-by-step to ensure the final conclusion is accurate.
"""

VERDICT_A = "A"
VERDICT_B = "B"
VERDICT_C = "C"
_VERDICTS = (VERDICT_A, VERDICT_B, VERDICT_C)

_ANSWER_RE = re.compile(r"<answer>\s*([ABC])\s*</answer>", re.IGNORECASE)


class OracleUnreachable(Exception):
    """The oracle endpoint could not be contacted."""


class MalformedResponse(Exception):
    """The oracle reply contained no parseable <answer> tag, even on retry."""


@dataclass(frozen=True)
class EdgeQuery:
    """One question to the oracle about the relationship between two concepts."""

    concept_a: str
    concept_b: str
    description_a: str = ""
    description_b: str = ""
    context: str = ""

    def __post_init__(self):
        if not self.concept_a or not self.concept_b:
            raise ValueError("concept names must be nonempty")

    def render(self, template: str) -> str:
        return template.format(
            concept_1=self.concept_a,
            concept_1_description=self.description_a or self.concept_a,
            concept_2=self.concept_b,
            concept_2_description=self.description_b or self.concept_b,
            context=self.context or "(no additional context)",
        )


@dataclass
class OracleClient:
    """Configuration for either an HTTP LLM oracle or a fixture-stub oracle.

    ``kind`` is "http-llm" or "fixture-stub".  The stub answers from
    ``verdicts``, a mapping from "a|b" (query order) to "A"/"B"/"C"; a pair
    absent from the table yields C.  Votes for a single edge may be issued
    concurrently, bounded by ``max_in_flight``.
    """

    kind: str = "fixture-stub"
    endpoint: str = ""
    api_key_env: str = ""
    model: str = ""
    votes_per_edge: int = 10
    prompt_template: str = DEFAULT_PROMPT
    verdicts: dict[str, str] = field(default_factory=dict)
    timeout: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("http-llm", "fixture-stub"):
            raise ValueError(f"unknown oracle kind: {self.kind!r}")
        if self.votes_per_edge < 1:
            raise ValueError("votes_per_edge must be >= 1")

    @classmethod
    def from_fixture(cls, path, **kwargs) -> "OracleClient":
        with open(path, encoding="utf-8") as fh:
            table = json.load(fh)
        return cls(kind="fixture-stub", verdicts=dict(table), **kwargs)


def stub_for_dag(dag: MixedGraph) -> OracleClient:
    """Build a stub oracle that answers according to a known true DAG."""
    table = {}
    names = dag.names
    for a in range(dag.node_count):
        for b in range(dag.node_count):
            if a == b:
                continue
            key = f"{names[a]}|{names[b]}"
            if dag.has_directed(a, b):
                table[key] = VERDICT_A
            elif dag.has_directed(b, a):
                table[key] = VERDICT_B
            else:
                table[key] = VERDICT_C
    return OracleClient(kind="fixture-stub", verdicts=table)


def _http_ask(client: OracleClient, prompt: str) -> str:
    import httpx

    headers = {"Content-Type": "application/json"}
    key = os.environ.get(client.api_key_env, "") if client.api_key_env else ""
    if key:
        headers["Authorization"] = f"Bearer {key}"
    payload = {
        "model": client.model,
        "temperature": 0,
        "messages": [{"role": "user", "content": prompt}],
    }
    try:
        resp = httpx.post(client.endpoint, json=payload, headers=headers,
                          timeout=client.timeout)
        resp.raise_for_status()
    except httpx.HTTPError as exc:
        raise OracleUnreachable(str(exc)) from exc
    body = resp.json()
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        return json.dumps(body)


def query_edge(client: OracleClient, q: EdgeQuery) -> str:
    """Issue one oracle query and parse the verdict from its <answer> tag."""
    if client.kind == "fixture-stub":
        verdict = client.verdicts.get(f"{q.concept_a}|{q.concept_b}")
        if verdict is None:
            flipped = client.verdicts.get(f"{q.concept_b}|{q.concept_a}")
            if flipped == VERDICT_A:
                verdict = VERDICT_B
            elif flipped == VERDICT_B:
                verdict = VERDICT_A
            elif flipped == VERDICT_C:
                verdict = VERDICT_C
        if verdict not in _VERDICTS:
            return VERDICT_C
        return verdict

    prompt = q.render(client.prompt_template)
    for attempt in range(2):
        text = _http_ask(client, prompt)
        m = _ANSWER_RE.search(text)
        if m:
            return m.group(1).upper()
    raise MalformedResponse(
        f"no <answer> tag in oracle reply for {q.concept_a}/{q.concept_b}")


def majority_verdict(client: OracleClient, q: EdgeQuery) -> str:
    """Query the oracle ``votes_per_edge`` times and return the modal verdict.

    A tie for the most frequent verdict resolves to C: dropping an uncertain
    edge is safer than keeping a wrong one.
    """
    n = client.votes_per_edge
    if client.kind == "fixture-stub" or n == 1:
        votes = [query_edge(client, q) for _ in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=client.max_in_flight) as pool:
            votes = list(pool.map(lambda _: query_edge(client, q), range(n)))
    counts = Counter(votes)
    best = max(counts.values())
    winners = [v for v, c in counts.items() if c == best]
    if len(winners) > 1:
        return VERDICT_C
    return winners[0]


def refine_cpdag(
    g: MixedGraph,
    client: OracleClient,
    descriptions: dict[str, str] | None = None,
    contexts: dict[str, str] | None = None,
    scorer: BdeuScorer | None = None,
    log: list | None = None,
) -> MixedGraph:
    """Resolve every undirected edge of a CPDAG through the oracle.

    Edges are processed in order of decreasing data support (the BDeu gain of
    the edge when a scorer is supplied, otherwise index order).  A or B
    orients the edge, C deletes it; Meek rules re-run after each applied
    orientation, and an orientation that would force a directed cycle is
    demoted to deletion.  Directed edges of the input graph are never
    touched.  The result is a fully directed acyclic graph.
    """
    descriptions = descriptions or {}
    contexts = contexts or {}
    names = g.names

    pending = sorted(g.undirected)
    if scorer is not None:
        def gain(edge):
            a, b = edge
            pa = frozenset(g.parents(b))
            return scorer.local_score(b, pa | {a}) - scorer.local_score(b, pa)
        pending.sort(key=lambda e: (-gain(e), e))

    directed = set(g.directed)
    undirected = set(g.undirected)

    def rebuild():
        return MixedGraph(g.node_count, directed=directed,
                          undirected=undirected, names=names)

    for a, b in pending:
        if (a, b) not in undirected:
            continue  # already oriented by Meek propagation
        na, nb = names[a], names[b]
        q = EdgeQuery(
            concept_a=na, concept_b=nb,
            description_a=descriptions.get(na, ""),
            description_b=descriptions.get(nb, ""),
            context=contexts.get(f"{na}|{nb}", ""),
        )
        verdict = majority_verdict(client, q)
        undirected.discard((a, b))
        if verdict == VERDICT_C:
            if log is not None:
                log.append((na, nb, VERDICT_C, "dropped"))
            continue
        src, dst = (a, b) if verdict == VERDICT_A else (b, a)
        directed.add((src, dst))
        try:
            propagated = apply_meek_rules(rebuild())
        except (CycleDetected, InconsistentPdag):
            directed.discard((src, dst))
            if log is not None:
                log.append((na, nb, verdict, "cycle-dropped"))
            continue
        directed = set(propagated.directed)
        undirected = set(propagated.undirected)
        if log is not None:
            log.append((na, nb, verdict, "oriented"))

    # anything the oracle never saw (unreachable in practice) is dropped too
    undirected.clear()
    out = rebuild()
    if not out.is_dag():
        raise CycleDetected("refinement produced a cyclic graph")
    return out
