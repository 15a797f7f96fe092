"""Graph containers, normalized adjacency, edge gradients, energies and homophily."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "NormalizedAdjacency",
    "EdgePartition",
    "DegenerateMetricError",
    "build_graph",
    "normalized_adjacency",
    "edge_gradient",
    "edge_gradients",
    "dirichlet_energy",
    "parametrized_dirichlet_energy",
    "edge_homophily",
    "adjusted_homophily",
    "partition_by_class",
    "load_bundle",
    "save_bundle",
]


class DegenerateMetricError(ValueError):
    """Raised when a metric's denominator vanishes."""


def _canonical_edges(edges, num_nodes):
    """Return sorted, deduplicated ``(i, j)`` rows with ``i < j`` and no self-loops."""
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.min() < 0 or arr.max() >= num_nodes:
        raise IndexError(
            f"edge index out of range for graph with {num_nodes} nodes"
        )
    arr = arr[arr[:, 0] != arr[:, 1]]
    arr = np.sort(arr, axis=1)
    keys = np.unique(arr[:, 0] * num_nodes + arr[:, 1])
    return np.stack([keys // num_nodes, keys % num_nodes], axis=1)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with node features and labels.

    Attributes
    ----------
    features : ndarray of shape (N, d0)
    labels : ndarray of shape (N,)
        Integer class ids in ``0..C-1``.
    edges : ndarray of shape (E, 2)
        Each undirected edge stored once as ``(i, j)`` with ``i < j``, sorted.
    degrees : ndarray of shape (N,)
        ``|Γ(i)|`` counted on the raw graph (no self-loops).
    """

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    degrees: np.ndarray
    name: str = "graph"

    @property
    def num_nodes(self):
        return self.features.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def with_edges(self, edges):
        """Same nodes, features and labels over a different edge set."""
        return build_graph(edges, self.features, self.labels, name=self.name)

    def permuted(self, perm):
        """Relabel nodes so that old node ``perm[k]`` becomes new node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return build_graph(
            inv[self.edges], self.features[perm], self.labels[perm], name=self.name
        )


def build_graph(edge_list, features, labels, name="graph"):
    """Build a :class:`Graph` from possibly directed, duplicated input pairs.

    Self-loops and duplicate undirected pairs are dropped.
    """
    X = np.array(features, dtype=np.float64, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    y = np.array(labels, dtype=np.int64, copy=True).reshape(-1)
    n = X.shape[0]
    if y.shape[0] != n:
        raise ValueError(
            f"labels length {y.shape[0]} does not match feature rows {n}"
        )
    if y.size and y.min() < 0:
        raise ValueError("labels must be non-negative class ids")
    edges = _canonical_edges(edge_list, n)
    degrees = np.bincount(edges.ravel(), minlength=n).astype(np.int64)
    for a in (X, y, edges, degrees):
        a.setflags(write=False)
    return Graph(features=X, labels=y, edges=edges, degrees=degrees, name=name)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Self-looped symmetric-normalized operator ``D̃^{-1/2} (I + A) D̃^{-1/2}``.

    ``matrix`` is CSR; ``scale[i] = 1 / sqrt(D_ii + 1)``.
    """

    matrix: sp.csr_matrix
    scale: np.ndarray

    @property
    def num_nodes(self):
        return self.matrix.shape[0]

    def toarray(self):
        return self.matrix.toarray()


def normalized_adjacency(g):
    n = g.num_nodes
    scale = 1.0 / np.sqrt(g.degrees + 1.0)
    i, j = g.edges[:, 0], g.edges[:, 1]
    diag = np.arange(n)
    rows = np.concatenate([i, j, diag])
    cols = np.concatenate([j, i, diag])
    dt = g.degrees + 1.0
    # the product is commutative, so both triangles hold bitwise-equal values
    off = 1.0 / np.sqrt(dt[i] * dt[j])
    vals = np.concatenate([off, off, 1.0 / dt])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sort_indices()
    scale.setflags(write=False)
    return NormalizedAdjacency(matrix=mat, scale=scale)


def edge_gradient(H, adj, i, j):
    """``s_j h_j - s_i h_i`` for a single pair."""
    n = adj.num_nodes
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"pair ({i}, {j}) out of range for {n} nodes")
    s = adj.scale
    return s[j] * H[j] - s[i] * H[i]


def edge_gradients(H, adj, edges):
    """Vectorized :func:`edge_gradient` over an ``(E, 2)`` array of pairs."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= adj.num_nodes):
        raise IndexError("edge index out of range")
    i, j = edges[:, 0], edges[:, 1]
    s = adj.scale
    return s[j, None] * H[j] - s[i, None] * H[i]


def dirichlet_energy(H, adj, edges):
    """Sum of squared edge-gradient norms, each undirected edge counted once."""
    G = edge_gradients(np.asarray(H, dtype=np.float64), adj, edges)
    return float(np.sum(G * G))


def parametrized_dirichlet_energy(H, omega, W, adj):
    """``Σ_i <h_i, Ω h_i> - Σ_ij a_ij <h_i, W h_j>`` with ``a_ij`` the entries of ``adj``.

    ``omega`` may be a full symmetric matrix or the vector of a diagonal one.
    """
    H = np.asarray(H, dtype=np.float64)
    d = H.shape[1]
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim == 1:
        omega = np.diag(omega)
    W = np.asarray(W, dtype=np.float64)
    if omega.shape != (d, d) or W.shape != (d, d):
        raise ValueError(
            f"expected ({d}, {d}) matrices, got {omega.shape} and {W.shape}"
        )
    self_term = np.sum((H @ omega) * H)
    pair_term = np.sum((adj.matrix @ H) * (H @ W))
    return float(self_term - pair_term)


def edge_homophily(g):
    """Fraction of edges joining same-class endpoints; NaN when the graph has no edges."""
    if g.num_edges == 0:
        return float("nan")
    y = g.labels
    return float(np.mean(y[g.edges[:, 0]] == y[g.edges[:, 1]]))


def adjusted_homophily(g):
    """Class-imbalance-corrected edge homophily.

    Raises
    ------
    DegenerateMetricError
        If there are no edges, or all degree mass sits in a single class.
    """
    if g.num_edges == 0:
        raise DegenerateMetricError("adjusted homophily undefined without edges")
    # every term is an integer count, so cancel the 1/(2|E|)^2 scaling and divide once
    e = int(g.num_edges)
    mass = np.bincount(g.labels, weights=g.degrees, minlength=g.num_classes).astype(np.int64)
    sq = sum(int(m) ** 2 for m in mass)
    same = int(np.count_nonzero(g.labels[g.edges[:, 0]] == g.labels[g.edges[:, 1]]))
    denom = 4 * e * e - sq
    if denom == 0:
        raise DegenerateMetricError("all degree mass lies in a single class")
    return (4 * e * same - sq) / denom


@dataclass(frozen=True)
class EdgePartition:
    hm: np.ndarray
    ht: np.ndarray


def partition_by_class(edges, labels):
    """Split pairs into same-label (``hm``) and cross-label (``ht``) edges, order kept."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(labels)
    same = labels[edges[:, 0]] == labels[edges[:, 1]]
    return EdgePartition(hm=edges[same], ht=edges[~same])


# --- bundle I/O -------------------------------------------------------------


def save_bundle(g, directory):
    """Write ``edges.tsv``, ``features.csv``, ``labels.txt`` and ``meta.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "edges.tsv", g.edges, fmt="%d", delimiter="\t")
    np.savetxt(out / "features.csv", g.features, fmt="%.17g", delimiter=",")
    np.savetxt(out / "labels.txt", g.labels, fmt="%d")
    meta = {
        "name": g.name,
        "num_nodes": int(g.num_nodes),
        "feature_dim": int(g.features.shape[1]),
        "num_classes": int(g.num_classes),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_bundle(directory):
    """Read a graph bundle directory written by :func:`save_bundle` or an external converter."""
    src = Path(directory)
    meta = json.loads((src / "meta.json").read_text())
    n = int(meta["num_nodes"])
    d = int(meta["feature_dim"])
    text = (src / "edges.tsv").read_text().split()
    edges = np.array(text, dtype=np.int64).reshape(-1, 2) if text else np.empty((0, 2))
    features = np.loadtxt(src / "features.csv", delimiter=",", ndmin=2)
    labels = np.loadtxt(src / "labels.txt", dtype=np.int64, ndmin=1)
    if features.shape != (n, d):
        raise ValueError(
            f"features.csv has shape {features.shape}, meta.json declares ({n}, {d})"
        )
    return build_graph(edges, features, labels, name=meta.get("name", src.name))
