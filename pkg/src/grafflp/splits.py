"""Transductive edge splits, negative sampling and synthetic heterophilic graphs."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import build_graph

__all__ = [
    "ROLES",
    "SplitConfig",
    "EdgeSplit",
    "transductive_split",
    "sample_negatives",
    "make_eval_set",
    "generate_grid_graph",
    "generate_chain_graph",
    "save_manifest",
    "load_manifest",
]

ROLES = ("train", "val", "test")

# exhaustive enumeration of candidate pairs below this many pairs
_ENUMERATION_LIMIT = 2_000_000


def _keys(edges, n):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return lo * n + hi


def _from_keys(keys, n):
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack([keys // n, keys % n], axis=1)


@dataclass(frozen=True)
class SplitConfig:
    """Split fractions and negative pool sizes.

    ``negative_pool_ratio`` gives, per role, how many negatives to store per
    positive edge. Training re-draws its negatives every epoch, so the stored
    train pool only serves train-set evaluation.
    """

    ratios: tuple = (0.8, 0.1, 0.1)
    disjoint_train_fraction: float = 0.2
    negative_pool_ratio: dict = field(
        default_factory=lambda: {"train": 1.0, "val": 1.0, "test": 1.0}
    )
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or not np.isclose(sum(self.ratios), 1.0):
            raise ValueError(f"split ratios must be three fractions summing to 1, got {self.ratios}")
        if not all(0.0 < r < 1.0 for r in self.ratios):
            raise ValueError("every split ratio must lie in (0, 1)")
        if not 0.0 < self.disjoint_train_fraction < 1.0:
            raise ValueError("disjoint_train_fraction must lie in (0, 1)")
        for role in ROLES:
            if self.negative_pool_ratio.get(role, 0) < 0:
                raise ValueError("negative pool ratios must be non-negative")


@dataclass
class EdgeSplit:
    """Per-role message-passing, positive and negative edges (undirected, ``i < j``)."""

    num_nodes: int
    message_passing: dict
    positives: dict
    negatives: dict
    config: SplitConfig

    @property
    def seed(self):
        return self.config.seed

    def directed_counts(self):
        """Counts in the directed convention (two arcs per undirected message-passing edge)."""
        return {
            role: {
                "message_passing": 2 * len(self.message_passing[role]),
                "positives": len(self.positives[role]),
                "negatives": len(self.negatives[role]),
            }
            for role in ROLES
        }

    def all_positive_edges(self):
        return np.concatenate([self.positives[r] for r in ROLES])


def sample_negatives(g, count, exclusion=None, seed=0):
    """Draw ``count`` distinct unordered non-self pairs uniformly, avoiding ``exclusion``.

    ``g`` may be a :class:`~grafflp.graph.Graph` or a node count. ``exclusion``
    defaults to the graph's edges. ``seed`` may also be a ``numpy`` Generator.

    Raises
    ------
    ValueError
        If fewer than ``count`` admissible pairs exist.
    """
    n = g if isinstance(g, (int, np.integer)) else g.num_nodes
    if exclusion is None:
        exclusion = np.empty((0, 2)) if isinstance(g, (int, np.integer)) else g.edges
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = int(count)
    if count < 0:
        raise ValueError("count must be non-negative")
    ex = _keys(exclusion, n)
    ex = np.unique(ex[ex // n != ex % n])
    total = n * (n - 1) // 2
    feasible = total - ex.size
    if count > feasible:
        raise ValueError(
            f"requested {count} negatives but only {feasible} admissible pairs exist"
        )
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)

    if total <= _ENUMERATION_LIMIT and count * 4 > feasible:
        iu, ju = np.triu_indices(n, k=1)
        cand = iu.astype(np.int64) * n + ju
        cand = cand[~np.isin(cand, ex, assume_unique=True)]
        picked = rng.choice(cand.size, size=count, replace=False)
        return _from_keys(cand[picked], n)

    out = np.empty(0, dtype=np.int64)
    while out.size < count:
        batch = max(2 * (count - out.size), 64)
        a = rng.integers(0, n, size=batch)
        b = rng.integers(0, n, size=batch)
        keep = a != b
        k = np.minimum(a, b)[keep] * n + np.maximum(a, b)[keep]
        k = k[~np.isin(k, ex)]
        k = k[~np.isin(k, out)]
        _, first = np.unique(k, return_index=True)
        k = k[np.sort(first)]
        out = np.concatenate([out, k[: count - out.size]])
    return _from_keys(out, n)


def transductive_split(g, cfg=None):
    """Split the graph's undirected edges into nested message-passing and supervision sets.

    Test and validation positives each take ``floor(ratio * |E|)`` edges; of the
    remaining training block, ``floor(disjoint_train_fraction * rest)`` edges
    become training positives and the rest carry training messages. Validation
    messages add back the training positives, test messages add back the
    validation positives.
    """
    cfg = cfg or SplitConfig()
    e = g.num_edges
    n_val = int(np.floor(cfg.ratios[1] * e))
    n_test = int(np.floor(cfg.ratios[2] * e))
    rest = e - n_val - n_test
    n_train = int(np.floor(cfg.disjoint_train_fraction * rest))
    if min(n_val, n_test, n_train, rest - n_train) < 1:
        raise ValueError(
            f"graph with {e} edges is too small for a split with these fractions"
        )
    rng = np.random.default_rng(cfg.seed)
    shuffled = g.edges[rng.permutation(e)]
    test_pos = shuffled[:n_test]
    val_pos = shuffled[n_test : n_test + n_val]
    train_block = shuffled[n_test + n_val :]
    train_pos = train_block[:n_train]
    train_mp = train_block[n_train:]

    def _sorted(a):
        return a[np.lexsort((a[:, 1], a[:, 0]))]

    mp = {
        "train": _sorted(train_mp),
        "val": _sorted(np.concatenate([train_mp, train_pos])),
        "test": _sorted(np.concatenate([train_mp, train_pos, val_pos])),
    }
    pos = {"train": train_pos, "val": val_pos, "test": test_pos}

    # negatives avoid every real edge and each other
    neg = {}
    exclusion = g.edges
    for role in ("test", "val", "train"):
        k = int(round(cfg.negative_pool_ratio.get(role, 1.0) * len(pos[role])))
        neg[role] = sample_negatives(g, k, exclusion, rng)
        exclusion = np.concatenate([exclusion, neg[role]])
    return EdgeSplit(
        num_nodes=g.num_nodes, message_passing=mp, positives=pos, negatives=neg, config=cfg
    )


def make_eval_set(split, role):
    """Balanced labelled pairs for ``role``: its positives (label 1) then as many negatives (label 0)."""
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    pos = split.positives[role]
    neg = split.negatives[role]
    if len(pos) == 0:
        raise ValueError(f"role {role!r} has no positive edges")
    if len(neg) < len(pos):
        raise ValueError(
            f"role {role!r} has {len(neg)} negatives, need {len(pos)} for a balanced set"
        )
    edges = np.concatenate([pos, neg[: len(pos)]])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(pos))])
    return edges, labels


# --- manifest ---------------------------------------------------------------


def save_manifest(split, path):
    payload = {
        "format": "grafflp-split",
        "version": 1,
        "num_nodes": split.num_nodes,
        "seed": split.config.seed,
        "config": {
            "ratios": list(split.config.ratios),
            "disjoint_train_fraction": split.config.disjoint_train_fraction,
            "negative_pool_ratio": dict(split.config.negative_pool_ratio),
            "seed": split.config.seed,
        },
    }
    for role in ROLES:
        payload[role] = {
            "message_passing": split.message_passing[role].tolist(),
            "positives": split.positives[role].tolist(),
            "negatives": split.negatives[role].tolist(),
        }
    Path(path).write_text(json.dumps(payload))


def load_manifest(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "grafflp-split":
        raise ValueError(f"{path} is not a split manifest")
    c = payload["config"]
    cfg = SplitConfig(
        ratios=tuple(c["ratios"]),
        disjoint_train_fraction=c["disjoint_train_fraction"],
        negative_pool_ratio=c["negative_pool_ratio"],
        seed=c["seed"],
    )

    def arr(x):
        return np.asarray(x, dtype=np.int64).reshape(-1, 2)

    return EdgeSplit(
        num_nodes=payload["num_nodes"],
        message_passing={r: arr(payload[r]["message_passing"]) for r in ROLES},
        positives={r: arr(payload[r]["positives"]) for r in ROLES},
        negatives={r: arr(payload[r]["negatives"]) for r in ROLES},
        config=cfg,
    )


# --- synthetic graphs -------------------------------------------------------

GRID_FEATURE_DIM = 7


def generate_grid_graph(rows, cols, mine_rate=0.2, seed=0):
    """Minesweeper-style lattice: every cell linked to its (up to) 8 neighbours.

    Labels are i.i.d. Bernoulli(``mine_rate``) mines. Node features are a
    one-hot encoding of how many neighbouring cells hold a mine, with bins
    ``0, 1, 2, 3, 4, 5, >=6`` (7 features).
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    if not 0.0 <= mine_rate <= 1.0:
        raise ValueError("mine_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    idx = np.arange(rows * cols).reshape(rows, cols)
    pairs = []
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        r0, r1 = 0, rows - dr
        c0, c1 = max(0, -dc), cols - max(0, dc)
        a = idx[r0:r1, c0:c1]
        b = idx[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
        pairs.append(np.stack([a.ravel(), b.ravel()], axis=1))
    edges = np.concatenate(pairs)
    mines = (rng.random(rows * cols) < mine_rate).astype(np.int64)
    counts = np.bincount(edges[:, 0], weights=mines[edges[:, 1]], minlength=rows * cols)
    counts += np.bincount(edges[:, 1], weights=mines[edges[:, 0]], minlength=rows * cols)
    bins = np.minimum(counts.astype(np.int64), GRID_FEATURE_DIM - 1)
    features = np.eye(GRID_FEATURE_DIM)[bins]
    return build_graph(edges, features, mines, name=f"grid{rows}x{cols}")


def generate_chain_graph(n, shortcut_rate=0.05, num_classes=18, seed=0, feature_dim=16):
    """Path ``0-1-...-(n-1)`` plus ``floor(shortcut_rate * n)`` random shortcuts.

    Labels cycle through ``num_classes`` along the path; features are standard normal.
    """
    if n < 2:
        raise ValueError("chain needs at least two nodes")
    rng = np.random.default_rng(seed)
    path = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    k = int(np.floor(shortcut_rate * n))
    shortcuts = sample_negatives(n, k, path, rng)
    labels = np.arange(n) % num_classes
    features = rng.standard_normal((n, feature_dim))
    return build_graph(np.concatenate([path, shortcuts]), features, labels, name=f"chain{n}")
