import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c2bm.bayesnet import ancestral_sample, load_bundled
from c2bm.discovery import BdeuScorer, ges_search
from c2bm.graphs import MixedGraph, dag_to_cpdag, mistaken_edges, structural_hamming
from c2bm.orientation import (
    DEFAULT_PROMPT,
    EdgeQuery,
    MalformedResponse,
    OracleClient,
    majority_verdict,
    query_edge,
    refine_cpdag,
    stub_for_dag,
)

from util import asia_truth


class TestEdgeQuery:
    def test_empty_name_rejected(self):
        with pytest.raises(ValueError):
            EdgeQuery(concept_a="", concept_b="b")

    def test_render_fills_template(self):
        q = EdgeQuery("smoke", "lung", "smoking habit", "lung cancer", "ctx")
        text = q.render(DEFAULT_PROMPT)
        assert "**Concept 1:** smoke - smoking habit" in text
        assert "**Concept 2:** lung - lung cancer" in text
        assert "ctx" in text
        assert "<answer>" in text


class TestStubOracle:
    def test_table_lookup(self):
        c = OracleClient(verdicts={"smoke|lung": "A"})
        assert query_edge(c, EdgeQuery("smoke", "lung")) == "A"

    def test_flipped_lookup(self):
        c = OracleClient(verdicts={"smoke|lung": "A"})
        assert query_edge(c, EdgeQuery("lung", "smoke")) == "B"

    def test_unknown_pair_is_c(self):
        c = OracleClient(verdicts={})
        assert query_edge(c, EdgeQuery("x", "y")) == "C"

    def test_fixture_file(self, tmp_path):
        path = tmp_path / "verdicts.json"
        path.write_text(json.dumps({"a|b": "B"}))
        c = OracleClient.from_fixture(path)
        assert query_edge(c, EdgeQuery("a", "b")) == "B"

    def test_stub_for_dag(self):
        truth = asia_truth()
        c = stub_for_dag(truth)
        assert query_edge(c, EdgeQuery("smoke", "lung")) == "A"
        assert query_edge(c, EdgeQuery("lung", "smoke")) == "B"
        assert query_edge(c, EdgeQuery("asia", "xray")) == "C"


class TestHttpOracle:
    def test_answer_tag_parsed(self, monkeypatch):
        monkeypatch.setattr(
            "c2bm.orientation._http_ask",
            lambda client, prompt: "step by step... <answer>C</answer>")
        c = OracleClient(kind="http-llm", endpoint="http://x")
        assert query_edge(c, EdgeQuery("a", "b")) == "C"

    def test_malformed_after_retry(self, monkeypatch):
        calls = []

        def fake(client, prompt):
            calls.append(1)
            return "no tag here"

        monkeypatch.setattr("c2bm.orientation._http_ask", fake)
        c = OracleClient(kind="http-llm", endpoint="http://x")
        with pytest.raises(MalformedResponse):
            query_edge(c, EdgeQuery("a", "b"))
        assert len(calls) == 2

    def test_retry_succeeds(self, monkeypatch):
        replies = iter(["garbled", "<answer>B</answer>"])
        monkeypatch.setattr(
            "c2bm.orientation._http_ask", lambda c, p: next(replies))
        c = OracleClient(kind="http-llm", endpoint="http://x")
        assert query_edge(c, EdgeQuery("a", "b")) == "B"


class TestMajorityVerdict:
    def _client_with_votes(self, monkeypatch, votes):
        c = OracleClient(kind="http-llm", endpoint="http://x",
                         votes_per_edge=len(votes))
        replies = iter(f"<answer>{v}</answer>" for v in votes)
        monkeypatch.setattr(
            "c2bm.orientation._http_ask", lambda cl, p: next(replies))
        return c

    def test_mode_wins(self, monkeypatch):
        c = self._client_with_votes(monkeypatch, ["A"] * 6 + ["B"] * 4)
        assert majority_verdict(c, EdgeQuery("a", "b")) == "A"

    def test_tie_is_c(self, monkeypatch):
        c = self._client_with_votes(monkeypatch, ["A"] * 5 + ["B"] * 5)
        assert majority_verdict(c, EdgeQuery("a", "b")) == "C"

    def test_unanimous_c(self, monkeypatch):
        c = self._client_with_votes(monkeypatch, ["C"] * 10)
        assert majority_verdict(c, EdgeQuery("a", "b")) == "C"

    def test_votes_lower_bound(self):
        with pytest.raises(ValueError):
            OracleClient(votes_per_edge=0)


class TestRefineCpdag:
    def test_no_undirected_edges_unchanged(self):
        g = MixedGraph(3, directed=[(0, 1), (1, 2)])
        out = refine_cpdag(g, OracleClient())
        assert out == g

    def test_orientation_applied(self):
        g = MixedGraph(2, undirected=[(0, 1)], names=("a", "b"))
        out = refine_cpdag(g, OracleClient(verdicts={"a|b": "A"}))
        assert out.directed == frozenset({(0, 1)})
        assert not out.undirected

    def test_verdict_c_deletes(self):
        g = MixedGraph(2, undirected=[(0, 1)], names=("a", "b"))
        out = refine_cpdag(g, OracleClient(verdicts={"a|b": "C"}))
        assert not out.directed and not out.undirected

    def test_cycle_forcing_edge_dropped(self):
        # a -> b -> c fixed; stub wants c -> a, which would close a cycle
        g = MixedGraph(3, directed=[(0, 1), (1, 2)], undirected=[(0, 2)],
                       names=("a", "b", "c"))
        client = OracleClient(verdicts={"a|c": "B"})
        log = []
        out = refine_cpdag(g, client, log=log)
        assert out.is_dag()
        assert not out.undirected
        assert out.directed == frozenset({(0, 1), (1, 2)})
        assert ("a", "c", "B", "cycle-dropped") in log

    def test_meek_propagation_keeps_triangle_consistent(self):
        # undirected triangle; stub wants a cyclic assignment, but Meek
        # orients the last edge consistently before it is ever queried
        g = MixedGraph(3, undirected=[(0, 1), (0, 2), (1, 2)],
                       names=("a", "b", "c"))
        client = OracleClient(verdicts={"a|b": "A", "b|c": "A", "c|a": "A"})
        out = refine_cpdag(g, client)
        assert out.is_dag()
        assert not out.undirected

    def test_directed_input_edges_never_altered(self):
        g = MixedGraph(3, directed=[(0, 1)], undirected=[(1, 2)],
                       names=("a", "b", "c"))
        # stub wants b -> a, but a -> b is already fixed and never queried
        client = OracleClient(verdicts={"a|b": "B", "b|c": "A"})
        out = refine_cpdag(g, client)
        assert out.has_directed(0, 1)
        assert out.has_directed(1, 2)

    def test_asia_truth_stub_refinement(self):
        truth = asia_truth()
        net = load_bundled("asia")
        results = []
        for seed in range(5):
            data = ancestral_sample(net, 10_000, seed=seed)
            scorer = BdeuScorer(data, net.cardinalities, 1.0)
            cpdag = ges_search(scorer, names=net.names)
            refined = refine_cpdag(cpdag, stub_for_dag(truth), scorer=scorer)
            assert refined.is_dag()
            assert mistaken_edges(truth, refined) <= mistaken_edges(truth, cpdag)
            results.append((mistaken_edges(truth, refined),
                            float(structural_hamming(truth, refined))))
        assert min(m for m, _ in results) <= 1


def _random_pdag_and_stub(draw_seed):
    rng = np.random.default_rng(draw_seed)
    n = int(rng.integers(3, 7))
    names = tuple(f"n{i}" for i in range(n))
    perm = rng.permutation(n)
    directed, undirected = set(), set()
    for i in range(n):
        for j in range(i + 1, n):
            r = rng.random()
            if r < 0.25:
                a, b = perm[i], perm[j]
                directed.add((int(a), int(b)))
            elif r < 0.5:
                undirected.add((min(int(perm[i]), int(perm[j])),
                                max(int(perm[i]), int(perm[j]))))
    g = MixedGraph(n, directed=directed, undirected=undirected, names=names)
    table = {}
    for a in range(n):
        for b in range(a + 1, n):
            table[f"n{a}|n{b}"] = ["A", "B", "C"][int(rng.integers(0, 3))]
    return g, OracleClient(verdicts=table)


@settings(max_examples=1000, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_refinement_always_acyclic(seed):
    g, client = _random_pdag_and_stub(seed)
    out = refine_cpdag(g, client)
    assert out.is_dag()
    assert not out.undirected
    assert g.directed <= out.directed
