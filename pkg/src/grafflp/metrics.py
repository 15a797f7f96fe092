"""AUROC, gradient separability and class-mix diagnostics.

Undefined values (an empty class-mix subset, a single-class ranking) are
reported as ``NaN`` by the subset helpers; :func:`auroc` itself raises.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .graph import edge_gradients, partition_by_class

__all__ = [
    "auroc",
    "GsTrace",
    "squared_gradient_norms",
    "gradient_separability",
    "gs_subset",
    "class_mix_auc",
    "distribution_summary",
    "write_gs_csv",
    "GS_CSV_COLUMNS",
]

UNDEFINED = float("nan")


def auroc(scores, labels):
    """Area under the ROC curve via the Mann-Whitney rank statistic.

    Tied scores share their average rank, so every tied positive/negative pair
    counts one half.

    Raises
    ------
    ValueError
        If ``labels`` does not contain both classes.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def squared_gradient_norms(H, adj, edges):
    G = edge_gradients(H, adj, edges)
    return np.sum(G * G, axis=1)


def _separability(pos_norms, neg_norms):
    if len(pos_norms) == 0 or len(neg_norms) == 0:
        return UNDEFINED
    # negatives are the class ranked high: large gradients should mean "no edge"
    scores = np.concatenate([pos_norms, neg_norms])
    target = np.concatenate([np.zeros(len(pos_norms)), np.ones(len(neg_norms))])
    return auroc(scores, target)


def distribution_summary(values):
    """Five-number summary ``(min, q1, median, q3, max)``, linear interpolation."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        return np.full(5, UNDEFINED)
    return np.percentile(values, [0, 25, 50, 75, 100])


@dataclass
class GsTrace:
    """Per-layer gradient separability with squared-norm summaries.

    ``gs_hm_hm`` / ``gs_ht_ht`` are NaN when labels were not supplied or a
    subset is empty. ``graph`` records which message-passing graph fed the degrees.
    """

    gs: list
    gs_hm_hm: list
    gs_ht_ht: list
    pos_summary: list
    neg_summary: list
    graph: str = "test"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.gs)

    def rows(self):
        for t in range(len(self.gs)):
            yield [t, self.gs[t], self.gs_hm_hm[t], self.gs_ht_ht[t],
                   *self.pos_summary[t], *self.neg_summary[t]]


def gradient_separability(trace, adj, pos_edges, neg_edges, labels=None, graph="test"):
    """Gradient separability at every layer of ``trace``.

    At layer ``t`` the squared edge-gradient norms of positive pairs are scored
    against those of negative pairs with negatives as class 1, so a value of 1
    means every non-edge has a larger gradient than every edge.
    """
    pos_edges = np.asarray(pos_edges, dtype=np.int64).reshape(-1, 2)
    neg_edges = np.asarray(neg_edges, dtype=np.int64).reshape(-1, 2)
    if len(pos_edges) == 0 or len(neg_edges) == 0:
        raise ValueError("gradient separability needs positive and negative edges")
    if labels is not None:
        pp = partition_by_class(pos_edges, labels)
        pn = partition_by_class(neg_edges, labels)
        same_pos = np.asarray(labels)[pos_edges[:, 0]] == np.asarray(labels)[pos_edges[:, 1]]
        same_neg = np.asarray(labels)[neg_edges[:, 0]] == np.asarray(labels)[neg_edges[:, 1]]
    out = GsTrace([], [], [], [], [], graph=graph)
    for H in trace:
        pos = squared_gradient_norms(H, adj, pos_edges)
        neg = squared_gradient_norms(H, adj, neg_edges)
        out.gs.append(_separability(pos, neg))
        if labels is None:
            out.gs_hm_hm.append(UNDEFINED)
            out.gs_ht_ht.append(UNDEFINED)
        else:
            out.gs_hm_hm.append(_separability(pos[same_pos], neg[same_neg]))
            out.gs_ht_ht.append(_separability(pos[~same_pos], neg[~same_neg]))
        out.pos_summary.append(distribution_summary(pos))
        out.neg_summary.append(distribution_summary(neg))
    if labels is not None:
        out.meta["counts"] = {
            "pos_hm": len(pp.hm), "pos_ht": len(pp.ht),
            "neg_hm": len(pn.hm), "neg_ht": len(pn.ht),
        }
    return out


def gs_subset(trace, adj, pos_edges, neg_edges, labels, u, v):
    """Per-layer separability of class-mix ``u`` positives against class-mix ``v`` negatives.

    ``u`` and ``v`` are each ``"hm"`` or ``"ht"``.
    """
    for mix in (u, v):
        if mix not in ("hm", "ht"):
            raise ValueError(f"class mix must be 'hm' or 'ht', got {mix!r}")
    pos = getattr(partition_by_class(pos_edges, labels), u)
    neg = getattr(partition_by_class(neg_edges, labels), v)
    if len(pos) == 0 or len(neg) == 0:
        return [UNDEFINED] * len(trace)
    return [
        _separability(squared_gradient_norms(H, adj, pos), squared_gradient_norms(H, adj, neg))
        for H in trace
    ]


def class_mix_auc(pos_scores, neg_scores, pos_edges, neg_edges, labels):
    """Model AUROC restricted to each (positive mix, negative mix) pair.

    Returns a dict keyed ``("hm", "hm")``, ``("hm", "ht")``, ``("ht", "hm")``,
    ``("ht", "ht")``; positives are class 1 here, the usual orientation.
    """
    labels = np.asarray(labels)
    pos_edges = np.asarray(pos_edges, dtype=np.int64).reshape(-1, 2)
    neg_edges = np.asarray(neg_edges, dtype=np.int64).reshape(-1, 2)
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    pos_same = labels[pos_edges[:, 0]] == labels[pos_edges[:, 1]]
    neg_same = labels[neg_edges[:, 0]] == labels[neg_edges[:, 1]]
    select = {"hm": lambda same: same, "ht": lambda same: ~same}
    out = {}
    for u in ("hm", "ht"):
        for v in ("hm", "ht"):
            ps = pos_scores[select[u](pos_same)]
            ns = neg_scores[select[v](neg_same)]
            if ps.size == 0 or ns.size == 0:
                out[(u, v)] = UNDEFINED
                continue
            out[(u, v)] = auroc(
                np.concatenate([ps, ns]),
                np.concatenate([np.ones(ps.size), np.zeros(ns.size)]),
            )
    return out


GS_CSV_COLUMNS = (
    ["layer", "gs", "gs_hm_hm", "gs_ht_ht"]
    + [f"pos_q{k}" for k in range(5)]
    + [f"neg_q{k}" for k in range(5)]
)


def write_gs_csv(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GS_CSV_COLUMNS)
        for row in trace.rows():
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
