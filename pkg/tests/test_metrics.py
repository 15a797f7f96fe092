import csv
import itertools

import numpy as np
import pytest

from grafflp.graph import build_graph, edge_gradient, normalized_adjacency
from grafflp.metrics import (
    GS_CSV_COLUMNS,
    auroc,
    class_mix_auc,
    distribution_summary,
    gradient_separability,
    gs_subset,
    squared_gradient_norms,
    write_gs_csv,
)


def brute_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def _norm_fixture(pos_norms, neg_norms):
    """Isolated nodes (scale 1) laid out so each pair's squared gradient is prescribed."""
    values = list(pos_norms) + list(neg_norms)
    n = 2 * len(values)
    H = np.zeros((n, 1))
    H[1::2, 0] = np.sqrt(values)
    adj = normalized_adjacency(build_graph([], np.zeros((n, 1)), np.zeros(n)))
    pairs = np.array([[2 * k, 2 * k + 1] for k in range(len(values))])
    return H, adj, pairs[: len(pos_norms)], pairs[len(pos_norms):]


# --- auroc --------------------------------------------------------------------------------


def test_auroc_cases():
    assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auroc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    assert auroc([0.8, 0.2, 0.4, 0.6], [1, 1, 0, 0]) == 0.5
    with pytest.raises(ValueError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auroc([0.1, 0.2], [1])


def test_auroc_brute_force_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = rng.integers(2, 40)
        scores = rng.integers(0, 6, n) / 5.0
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        assert abs(auroc(scores, labels) - brute_auroc(scores, labels)) <= 1e-12


def test_auroc_complement():
    rng = np.random.default_rng(1)
    for _ in range(50):
        scores = rng.standard_normal(30)
        labels = rng.integers(0, 2, 30)
        labels[:2] = [0, 1]
        assert auroc(scores, labels) + auroc(scores, 1 - labels) == pytest.approx(1.0, abs=1e-12)


# --- gradient separability -------------------------------------------------------------------


def test_gs_orientation():
    H, adj, pos, neg = _norm_fixture([0.1, 0.2], [0.5, 0.9])
    np.testing.assert_allclose(squared_gradient_norms(H, adj, pos), [0.1, 0.2])
    gs = gradient_separability([H], adj, pos, neg)
    assert gs.gs == [1.0]
    flipped = gradient_separability([H], adj, neg, pos)
    assert flipped.gs == [0.0]


def test_gs_all_equal_is_half():
    H, adj, pos, neg = _norm_fixture([0.4, 0.4], [0.4, 0.4, 0.4])
    assert gradient_separability([H], adj, pos, neg).gs == [0.5]


def test_gs_swap_is_complement():
    rng = np.random.default_rng(0)
    H, adj, pos, neg = _norm_fixture(rng.random(20), rng.random(25))
    trace = [H, 2 * H]
    a = gradient_separability(trace, adj, pos, neg)
    b = gradient_separability(trace, adj, neg, pos)
    np.testing.assert_allclose(np.add(a.gs, b.gs), 1.0, atol=1e-12)
    assert len(a) == 2


def test_gs_monotone_invariance():
    rng = np.random.default_rng(2)
    pn, nn_ = rng.random(30), rng.random(30)
    base = gradient_separability(*_gs_args(pn, nn_)).gs
    for f in (np.sqrt, lambda x: np.exp(3 * x) - 1, lambda x: x**3):
        assert gradient_separability(*_gs_args(f(pn), f(nn_))).gs == pytest.approx(base, abs=1e-12)


def _gs_args(pos_norms, neg_norms):
    H, adj, pos, neg = _norm_fixture(pos_norms, neg_norms)
    return [H], adj, pos, neg


def test_gs_empty_edges_error():
    H, adj, pos, _ = _norm_fixture([0.1], [0.2])
    with pytest.raises(ValueError):
        gradient_separability([H], adj, pos, np.empty((0, 2)))


def test_gs_six_node_toy_matches_brute_force():
    g = build_graph([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)], np.zeros((6, 1)), [0, 0, 1, 1, 0, 1])
    adj = normalized_adjacency(g)
    rng = np.random.default_rng(5)
    trace = [rng.standard_normal((6, 3)) for _ in range(3)]
    pos = g.edges
    neg = np.array([[0, 2], [0, 3], [1, 4], [2, 5], [1, 3]])
    out = gradient_separability(trace, adj, pos, neg, g.labels)
    for t, H in enumerate(trace):
        p = [np.sum(edge_gradient(H, adj, i, j) ** 2) for i, j in pos]
        n = [np.sum(edge_gradient(H, adj, i, j) ** 2) for i, j in neg]
        assert out.gs[t] == pytest.approx(brute_auroc(p + n, [0] * len(p) + [1] * len(n)), abs=1e-12)


def test_gs_subset_cases():
    g = build_graph([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)], np.zeros((6, 1)), [0, 0, 1, 1, 0, 1])
    adj = normalized_adjacency(g)
    y = g.labels
    rng = np.random.default_rng(6)
    trace = [rng.standard_normal((6, 2)) for _ in range(2)]
    neg = np.array([[0, 2], [0, 4], [1, 4], [2, 5], [1, 3]])
    # hand filtering: homophilic positives (0,1), (2,3); heterophilic negatives (0,2), (1,3)
    got = gs_subset(trace, adj, g.edges, neg, y, "hm", "ht")
    hm_pos = [(0, 1), (2, 3)]
    ht_neg = [(0, 2), (1, 3)]
    for t, H in enumerate(trace):
        p = [np.sum(edge_gradient(H, adj, i, j) ** 2) for i, j in hm_pos]
        n = [np.sum(edge_gradient(H, adj, i, j) ** 2) for i, j in ht_neg]
        assert got[t] == pytest.approx(brute_auroc(p + n, [0] * len(p) + [1] * len(n)), abs=1e-12)
    same = build_graph([], np.zeros((6, 1)), np.zeros(6))
    full = gradient_separability(trace, adj, g.edges, neg, same.labels)
    assert gs_subset(trace, adj, g.edges, neg, same.labels, "hm", "hm") == full.gs
    assert all(np.isnan(gs_subset(trace, adj, g.edges, neg, same.labels, "ht", "hm")))
    with pytest.raises(ValueError):
        gs_subset(trace, adj, g.edges, neg, y, "hm", "xx")


def test_gs_class_conditioned_fields():
    g = build_graph([(0, 1), (1, 2), (2, 3)], np.zeros((4, 1)), [0, 0, 1, 1])
    adj = normalized_adjacency(g)
    H = np.random.default_rng(0).standard_normal((4, 2))
    neg = np.array([[0, 2], [0, 3]])
    out = gradient_separability([H], adj, g.edges, neg, g.labels)
    assert np.isnan(out.gs_hm_hm[0])  # no homophilic negatives
    assert out.meta["counts"] == {"pos_hm": 2, "pos_ht": 1, "neg_hm": 0, "neg_ht": 2}
    assert np.isnan(gradient_separability([H], adj, g.edges, neg).gs_ht_ht[0])


# --- class-mix AUC -------------------------------------------------------------------------------


def _mix_fixture(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, 200)
    pos = rng.integers(0, 200, (n, 2))
    neg = rng.integers(0, 200, (n, 2))
    return rng, labels, pos, neg


def test_class_mix_perfect_model():
    rng, labels, pos, neg = _mix_fixture(200)
    out = class_mix_auc(np.ones(200), np.zeros(200), pos, neg, labels)
    assert set(out) == set(itertools.product(("hm", "ht"), repeat=2))
    assert all(v == 1.0 for v in out.values())


def test_class_mix_random_scores():
    rng, labels, pos, neg = _mix_fixture()
    out = class_mix_auc(rng.random(len(pos)), rng.random(len(neg)), pos, neg, labels)
    assert all(abs(v - 0.5) <= 0.05 for v in out.values())


def test_class_mix_missing_subset():
    labels = np.array([0, 0, 1, 1])
    pos = np.array([[0, 1], [2, 3]])
    neg = np.array([[0, 2]])
    out = class_mix_auc([0.9, 0.8], [0.1], pos, neg, labels)
    assert out[("hm", "ht")] == 1.0
    assert np.isnan(out[("hm", "hm")]) and np.isnan(out[("ht", "ht")])


# --- distribution summaries ------------------------------------------------------------------------


def test_distribution_summary_cases():
    np.testing.assert_array_equal(distribution_summary([2.0] * 7), [2.0] * 5)
    assert distribution_summary([1, 2, 3, 4, 5])[2] == 3
    assert np.all(np.isnan(distribution_summary([])))


def test_distribution_summary_sort_oracle():
    rng = np.random.default_rng(0)
    for n in (1, 2, 9, 100, 101):
        v = rng.standard_normal(n)
        s = np.sort(v)

        def q(p):
            pos = p * (n - 1)
            lo = int(np.floor(pos))
            hi = min(lo + 1, n - 1)
            return s[lo] + (pos - lo) * (s[hi] - s[lo])

        np.testing.assert_allclose(distribution_summary(v), [q(p) for p in (0, 0.25, 0.5, 0.75, 1)], rtol=1e-12)


def test_gs_csv(tmp_path):
    rng = np.random.default_rng(0)
    H, adj, pos, neg = _norm_fixture(rng.random(5), rng.random(5))
    out = gradient_separability([H, H / 2, H / 3], adj, pos, neg)
    write_gs_csv(out, tmp_path / "gs.csv")
    with open(tmp_path / "gs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == GS_CSV_COLUMNS
    assert len(rows) == 4
    assert float(rows[1][1]) == out.gs[0]
    assert all(0.0 <= g <= 1.0 for g in out.gs)
