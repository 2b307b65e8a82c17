import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphpoison.analysis import (
    CurveRow,
    HistogramReport,
    ScatterRecord,
    attack_curve,
    confidence_gradient_scatter,
    confidence_histogram,
    format_curve,
    format_histogram,
    format_scatter,
    parse_curve,
    parse_histogram,
    parse_scatter,
    perturb,
)
from graphpoison.datasets import random_instance
from graphpoison.errors import ParseError, ValidationError
from graphpoison.graph import Graph
from graphpoison.structgrad import AttackObjective
from graphpoison.surrogate import SurrogateParams, TrainConfig, pseudo_label_table, train
from graphpoison.victim import VictimConfig, trial_suite

NEG, GD = AttackObjective.NEG_CE, AttackObjective.GRAD_DEBIAS
QUICK_VICTIM = VictimConfig(epochs=60, n_trials=2)


class TestScatter:
    def test_norm_ratio_is_inverse_confidence(self):
        g, lab = random_instance(25, 0.15, 6, 3, seed=2)
        params = train(g, lab)
        table = pseudo_label_table(params, g)
        targets = sorted(set(range(25)) - set(lab))
        neg = confidence_gradient_scatter(params, g, targets, table, NEG)
        gd = confidence_gradient_scatter(params, g, targets, table, GD)
        for a, b in zip(neg, gd):
            assert a.node == b.node and a.confidence == b.confidence
            assert a.partial_norm == pytest.approx(b.partial_norm / b.confidence, rel=1e-9)
            assert a.confidence >= 1 / 3 and np.isfinite(a.partial_norm)

    def test_isolated_node_zero_weights(self):
        g = Graph(4, [(0, 1), (1, 2)], np.eye(4))
        params = SurrogateParams(np.zeros((4, 2)))
        rec = confidence_gradient_scatter(params, g, [3], pseudo_label_table(params, g), GD)
        assert rec[0].partial_norm == 0.0

    def test_spearman_on_sbm(self, sbm_bundle):
        from scipy.stats import spearmanr

        g = sbm_bundle.attacker_view()
        params = train(g, sbm_bundle.labeled)
        table = pseudo_label_table(params, g)
        recs = confidence_gradient_scatter(params, g, sbm_bundle.unlabeled, table, NEG)
        rho = spearmanr([r.confidence for r in recs], [r.partial_norm for r in recs])[0]
        assert rho <= -0.5


class TestHistogram:
    def test_identical_graphs_identical_counts(self):
        g, lab = random_instance(30, 0.15, 6, 3, seed=1)
        rep = confidence_histogram({"clean": g, "copy": g}, lab, victim_cfg=QUICK_VICTIM)
        assert np.array_equal(rep.counts["clean"], rep.counts["copy"])

    def test_mass_conservation(self):
        g, lab = random_instance(30, 0.15, 6, 3, seed=1)
        other = g.with_edges(np.array([[0, 1], [2, 3], [4, 5]]))
        rep = confidence_histogram({"clean": g, "other": other}, lab, victim_cfg=QUICK_VICTIM)
        assert all(c.sum() == 30 for c in rep.counts.values())
        assert rep.bin_edges.tolist() == pytest.approx(np.linspace(0, 1, 11).tolist())
        sub = confidence_histogram({"clean": g}, lab, victim_cfg=QUICK_VICTIM, nodes=range(10))
        assert sub.counts["clean"].sum() == 10

    def test_requires_reference_and_shared_nodes(self):
        g, lab = random_instance(10, 0.2, 3, 2, seed=0)
        with pytest.raises(ValidationError):
            confidence_histogram({"poisoned": g}, lab, victim_cfg=QUICK_VICTIM)
        small, _ = random_instance(9, 0.2, 3, 2, seed=0)
        with pytest.raises(ValidationError):
            confidence_histogram({"clean": g, "other": small}, lab, victim_cfg=QUICK_VICTIM)

    def test_bin_count(self):
        rep = HistogramReport(np.linspace(0, 1, 11), {"clean": np.arange(10)})
        assert rep.bin_count("clean", 0.9) == 9 and rep.bin_count("clean", 0.0) == 0


class TestCurve:
    def test_budget_zero_row_is_clean_suite(self, sbm_bundle):
        rows = attack_curve(sbm_bundle, ["grad-debias", "random"], [0.02], QUICK_VICTIM, train_cfg=TrainConfig(epochs=50))
        clean = trial_suite(sbm_bundle.graph, sbm_bundle.labeled, sbm_bundle.unlabeled, QUICK_VICTIM)
        assert [(r.objective, r.budget_fraction) for r in rows] == [
            ("grad-debias", 0.0), ("grad-debias", 0.02), ("random", 0.0), ("random", 0.02)
        ]
        for r in rows:
            if r.budget_fraction == 0.0:
                assert r.mean_acc == clean.mean and r.std_acc == clean.std

    def test_rejects_unsorted_budgets(self, sbm_bundle):
        with pytest.raises(ValidationError):
            attack_curve(sbm_bundle, ["grad-debias"], [0.05, 0.03], QUICK_VICTIM)

    @pytest.mark.slow
    def test_grad_debias_curve_soft_monotone(self, sbm_bundle):
        cfg = VictimConfig(n_trials=3)
        rows = attack_curve(sbm_bundle, ["grad-debias"], [0.05, 0.1, 0.2], cfg)
        for a, b in zip(rows, rows[1:]):
            assert b.mean_acc <= a.mean_acc + max(a.std_acc, b.std_acc, 1e-3)

    @pytest.mark.parametrize("method", ["random", "dice", "neg-ce", "grad-debias"])
    def test_perturb_methods(self, sbm_bundle, method):
        run = perturb(sbm_bundle, method, 0.01, seed=0, train_cfg=TrainConfig(epochs=30))
        assert len(run.flips) == run.budget == max(1, int(0.01 * sbm_bundle.graph.num_edges))


class TestCsv:
    @settings(max_examples=30)
    @given(
        st.lists(
            st.tuples(st.integers(0, 10**6), st.floats(1e-3, 1), st.floats(0, 1e6), st.sampled_from(list(AttackObjective))),
            max_size=20,
        )
    )
    def test_scatter_round_trip(self, rows):
        recs = [ScatterRecord(*r) for r in rows]
        text = format_scatter(recs)
        assert text.splitlines()[0] == "node,confidence,partial_norm,objective"
        assert parse_scatter(text) == recs

    @settings(max_examples=30)
    @given(st.dictionaries(st.text("abcxyz-", min_size=1, max_size=6), st.lists(st.integers(0, 500), min_size=10, max_size=10), min_size=1, max_size=4))
    def test_histogram_round_trip(self, counts):
        rep = HistogramReport(np.linspace(0, 1, 11), {k: np.asarray(v) for k, v in counts.items()})
        back = parse_histogram(format_histogram(rep))
        assert np.array_equal(back.bin_edges, rep.bin_edges)
        assert back.counts.keys() == rep.counts.keys()
        assert all(np.array_equal(back.counts[k], rep.counts[k]) for k in rep.counts)

    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.sampled_from(["neg-ce", "grad-debias", "dice"]), st.floats(0, 0.5), st.floats(0, 1), st.floats(0, 0.5)), max_size=10))
    def test_curve_round_trip(self, rows):
        recs = [CurveRow(*r) for r in rows]
        assert parse_curve(format_curve(recs)) == recs

    def test_bad_header(self):
        with pytest.raises(ParseError):
            parse_curve("objective,budget\n")
        with pytest.raises(ParseError):
            parse_scatter("node,confidence,partial_norm,objective\n1,0.5,x,neg-ce\n")
