import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from c2bm.bayesnet import ancestral_sample
from c2bm.graphs import MixedGraph, depth_levels
from c2bm.interventions import (
    EvalReport,
    InterventionPlan,
    NonBinaryConcept,
    blocked_cace,
    cace,
    evaluate_with_interventions,
    fairness_network,
    level_policy,
)
from c2bm.model import C2bmConfig, C2bmModel

from util import asia_truth


def small_model(seed=0):
    g = MixedGraph(4, directed=[(0, 1), (1, 2), (2, 3)],
                   names=("a", "b", "c", "d"))
    cfg = C2bmConfig(graph=g, cardinalities=(2,) * 4, task=3, feature_dim=4,
                     embedding_dim=4, encoder_hidden=(8,), hyper_hidden=(8,),
                     seed=seed)
    return C2bmModel(cfg)


class TestLevelPolicy:
    def test_asia_level_zero(self):
        truth = asia_truth()
        plan = level_policy(truth, 0, fraction=1.0, seed=0,
                            task=truth.index_of("dysp"))
        names = {truth.names[v] for v in plan.nodes}
        assert names == {"asia", "smoke"}

    def test_max_level_all_but_task(self):
        truth = asia_truth()
        top = max(depth_levels(truth))
        plan = level_policy(truth, top, fraction=1.0, seed=0,
                            task=truth.index_of("dysp"))
        assert len(plan.nodes) == 7
        assert truth.index_of("dysp") not in plan.nodes

    def test_fraction_zero_empty(self):
        plan = level_policy(asia_truth(), 3, fraction=0.0, seed=0)
        assert plan.nodes == ()

    def test_deterministic(self):
        a = level_policy(asia_truth(), 2, fraction=0.5, seed=9)
        b = level_policy(asia_truth(), 2, fraction=0.5, seed=9)
        assert a == b

    def test_negative_level(self):
        with pytest.raises(ValueError):
            level_policy(asia_truth(), -1)


class TestEvaluate:
    def test_empty_plan_equals_plain_accuracy(self):
        model = small_model()
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(50, 4))
        report = evaluate_with_interventions(
            model, x, c, plans=[InterventionPlan(nodes=(), level=0)])
        assert report.curve[0]["task_accuracy"] == report.task_accuracy
        assert report.curve[0]["mean_label_accuracy"] == pytest.approx(
            report.mean_label_accuracy)

    def test_clamped_nodes_excluded_from_aggregate(self):
        model = small_model()
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(30, 4))
        report = evaluate_with_interventions(
            model, x, c, plans=[InterventionPlan(nodes=(0, 1), level=1)])
        point = report.curve[0]
        assert point["clamped"] == ["a", "b"]
        # aggregate covers c and d only; recompute by hand
        p = model.predict(x, {0: c[:, 0], 1: c[:, 1]})
        expect = np.mean([(p[v].argmax(-1) == c[:, v]).mean() for v in (2, 3)])
        assert point["mean_label_accuracy"] == pytest.approx(expect)

    def test_ground_truth_clamp_is_exact(self):
        model = small_model()
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(20, 4))
        p = model.predict(x, {1: c[:, 1]})
        assert (p[1].argmax(-1) == c[:, 1]).all()

    def test_report_json_roundtrip(self):
        model = small_model()
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(10, 4))
        report = evaluate_with_interventions(model, x, c)
        back = EvalReport.from_json(report.to_json())
        assert back == report


class TestCace:
    def test_no_path_zero_exactly(self):
        # concept d (sink) has no path to a (root): clamping d cannot move a
        g = MixedGraph(3, directed=[(0, 1), (1, 2)], names=("a", "b", "c"))
        cfg = C2bmConfig(graph=g, cardinalities=(2,) * 3, task=2,
                         feature_dim=4, embedding_dim=4, encoder_hidden=(8,),
                         hyper_hidden=(8,))
        model = C2bmModel(cfg)
        x = np.random.default_rng(0).normal(size=(25, 4)).astype(np.float32)
        assert cace(model, x, concept=2, target=0) == 0.0

    def test_direct_edge_nonzero(self):
        model = small_model()
        x = np.random.default_rng(1).normal(size=(25, 4)).astype(np.float32)
        assert cace(model, x, concept=0, target=3) > 0.0

    def test_nonbinary_rejected(self):
        g = MixedGraph(2, directed=[(0, 1)])
        cfg = C2bmConfig(graph=g, cardinalities=(3, 2), task=1, feature_dim=4,
                         embedding_dim=4, encoder_hidden=(8,), hyper_hidden=(8,))
        model = C2bmModel(cfg)
        x = np.zeros((5, 4), dtype=np.float32)
        with pytest.raises(NonBinaryConcept):
            cace(model, x, concept=0, target=1)


class TestBlockedCace:
    def test_mediator_on_only_path_blocks_exactly(self):
        model = small_model()
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(30, 4))
        assert blocked_cace(model, x, c, concept=0, target=3, mediator=1) == 0.0
        assert blocked_cace(model, x, c, concept=0, target=3, mediator=2) == 0.0

    def test_mediator_off_path_equals_unblocked(self):
        # a -> c and b isolated: clamping b changes nothing on the a->c effect
        g = MixedGraph(3, directed=[(0, 2)], names=("a", "b", "c"))
        cfg = C2bmConfig(graph=g, cardinalities=(2,) * 3, task=2,
                         feature_dim=4, embedding_dim=4, encoder_hidden=(8,),
                         hyper_hidden=(8,))
        model = C2bmModel(cfg)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(30, 3))
        plain = cace(model, x, concept=0, target=2)
        blocked = blocked_cace(model, x, c, concept=0, target=2, mediator=1)
        assert blocked == pytest.approx(plain, abs=1e-9)

    def test_mediator_is_concept_itself(self):
        model = small_model()
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 4)).astype(np.float32)
        c = rng.integers(0, 2, size=(30, 4))
        # the do-arms overwrite the mediator clamp on the same node
        assert blocked_cace(model, x, c, concept=1, target=3, mediator=1) > 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_vertex_cut_blocks_effect(seed):
    rng = np.random.default_rng(seed)
    # random chain with a random extra forward edge that respects the cut
    n = 4
    g = MixedGraph(n, directed=[(0, 1), (1, 2), (2, 3)])
    cfg = C2bmConfig(graph=g, cardinalities=(2,) * n, task=n - 1,
                     feature_dim=3, embedding_dim=3, encoder_hidden=(4,),
                     hyper_hidden=(4,), seed=int(rng.integers(0, 2**31)))
    model = C2bmModel(cfg)
    x = rng.normal(size=(8, 3)).astype(np.float32)
    cut = int(rng.integers(1, 3))
    clamp_value = np.asarray(rng.integers(0, 2, 8))
    effect = cace(model, x, concept=0, target=n - 1,
                  extra_clamps={cut: clamp_value})
    assert effect == 0.0


class TestFairnessNetwork:
    def test_structure(self):
        net = fairness_network()
        g = net.graph
        q = g.index_of("qualified")
        h = g.index_of("should_be_hired")
        assert set(g.parents(q)) == {g.index_of("attractive"),
                                     g.index_of("makeup"),
                                     g.index_of("lipstick")}
        assert set(g.parents(h)) == {q, g.index_of("pointy_nose")}

    def test_rule_probabilities(self):
        net = fairness_network(noise=0.05)
        q = net.graph.index_of("qualified")
        # attractive=yes alone qualifies
        row = net.cpt_row(q, {net.graph.index_of("attractive"): 1,
                              net.graph.index_of("makeup"): 0,
                              net.graph.index_of("lipstick"): 0})
        assert row[1] == pytest.approx(0.95)
        # nothing set: not qualified
        row = net.cpt_row(q, {net.graph.index_of("attractive"): 0,
                              net.graph.index_of("makeup"): 0,
                              net.graph.index_of("lipstick"): 0})
        assert row[1] == pytest.approx(0.05)
        h = net.graph.index_of("should_be_hired")
        row = net.cpt_row(h, {q: 1, net.graph.index_of("pointy_nose"): 1})
        assert row[1] == pytest.approx(0.95)

    def test_sampling_marginals(self):
        net = fairness_network()
        data = ancestral_sample(net, 40_000, seed=0)
        g = net.graph
        # P(qualified=yes) = P(A) + (1-P(A)) P(M)P(L) with noise folded in
        a = data[:, g.index_of("attractive")]
        q = data[:, g.index_of("qualified")]
        p_q = q.mean()
        # exact: .95*(P(rule)) + .05*(1-P(rule)); P(rule)=.5+.5*.25=.625
        expect = 0.95 * 0.625 + 0.05 * 0.375
        assert abs(p_q - expect) < 0.01
        # attractiveness raises hiring odds through qualification
        h = data[:, g.index_of("should_be_hired")]
        assert h[a == 1].mean() > h[a == 0].mean() + 0.1
