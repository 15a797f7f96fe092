"""Full-batch training with early stopping, evaluation and experiment grids."""

import dataclasses
import itertools
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import models as M
from .graph import normalized_adjacency
from .metrics import auroc, class_mix_auc, gradient_separability
from .nn import AdamState, adam_step, bce_with_logits
from .splits import ROLES, EdgeSplit, make_eval_set, sample_negatives

__all__ = [
    "SEARCH_SPACE",
    "ConfigError",
    "NumericalDivergenceError",
    "TrainConfig",
    "RunReport",
    "train",
    "fit_model",
    "evaluate",
    "role_adjacency",
    "grid_size",
    "grid_expand",
    "measure_inference",
    "report_scaling",
    "read_config",
    "write_config",
]

logger = logging.getLogger(__name__)

SEARCH_SPACE = {
    "lr": (0.01, 0.001),
    "weight_decay": (0.0, 0.01, 0.001),
    "hidden_dim": (128, 256),
    "mlp_dim": (32, 64),
    "dropout": (0.1, 0.3, 0.5),
    "mlp_dropout": (0.1, 0.3, 0.5),
    "num_layers": (1, 3, 5, 7, 9, 12),
    "mlp_layers": (0, 1, 2),
    "batch_norm": (True, False),
    "neg_ratio": (0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
    "step_size": (0.1, 0.25, 0.5),
}


class ConfigError(ValueError):
    """Invalid training configuration."""


class NumericalDivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and architecture settings of one run.

    Values of the searched hyperparameters must lie in :data:`SEARCH_SPACE`
    unless ``allow_out_of_space`` is set.
    """

    lr: float = 0.01
    weight_decay: float = 0.0
    hidden_dim: int = 128
    mlp_dim: int = 32
    dropout: float = 0.1
    mlp_dropout: float = 0.1
    num_layers: int = 3
    mlp_layers: int = 1
    batch_norm: bool = False
    neg_ratio: float = 1.0
    step_size: float = 0.5
    max_epochs: int = 3000
    patience: int = 300
    seed: int = 0
    model: str = "graff"
    readout: str = "gradient"
    source_term: bool = True
    w_param: str = "diag_dominant"
    allow_out_of_space: bool = False

    def __post_init__(self):
        if not self.allow_out_of_space:
            for key, domain in SEARCH_SPACE.items():
                if getattr(self, key) not in domain:
                    raise ConfigError(
                        f"{key}={getattr(self, key)!r} outside {domain}; "
                        "set allow_out_of_space to override"
                    )
        if self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("max_epochs must be >= 1 and patience >= 0")
        if self.neg_ratio <= 0 or self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("neg_ratio must be positive; lr and weight_decay non-negative")
        try:
            self.model_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self):
        return M.GraffConfig(
            model=self.model,
            num_layers=self.num_layers,
            step_size=self.step_size,
            hidden_dim=self.hidden_dim,
            dropout=self.dropout,
            mlp_layers=self.mlp_layers,
            mlp_dim=self.mlp_dim,
            mlp_dropout=self.mlp_dropout,
            batch_norm=self.batch_norm,
            readout=self.readout,
            source_term=self.source_term,
            w_param=self.w_param,
        )

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class RunReport:
    best_val_auroc: float
    test_auroc: float
    best_epoch: int
    epochs_run: int
    loss_history: list
    val_history: list
    param_count: int
    config: dict
    seed: int
    timings: dict = field(default_factory=dict)
    test_class_mix: dict = field(default_factory=dict)
    gs: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


# --- helpers ---------------------------------------------------------------------


def role_adjacency(g, split, role):
    """Normalized adjacency of ``role``'s message-passing graph."""
    return normalized_adjacency(g.with_edges(split.message_passing[role]))


def _without_test(split):
    empty = np.empty((0, 2), dtype=np.int64)
    return EdgeSplit(
        num_nodes=split.num_nodes,
        message_passing={**split.message_passing, "test": empty},
        positives={**split.positives, "test": empty},
        negatives={**split.negatives, "test": empty},
        config=split.config,
    )


def _streams(seed):
    """Independent generators for init, dropout and negative sampling."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


# --- training ---------------------------------------------------------------------


def fit_model(g, split, cfg, log_every=0):
    """Optimize a fresh model using only the train and validation roles of ``split``.

    Returns ``(best_model, history)``; the model is the checkpoint with the
    highest validation AUROC.
    """
    init_rng, drop_rng, neg_rng = _streams(cfg.seed)
    model = M.init_model(cfg.model_config(), g.features.shape[1], init_rng)
    opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    adj_train = role_adjacency(g, split, "train")
    adj_val = role_adjacency(g, split, "val")
    val_edges, val_labels = make_eval_set(split, "val")
    train_pos = split.positives["train"]
    if len(train_pos) == 0:
        raise ValueError("split has no training positives")
    n_neg = max(1, int(round(cfg.neg_ratio * len(train_pos))))
    ones = np.ones(len(train_pos))
    X = g.features

    best_auc, best_epoch, best_model = -np.inf, 0, None
    losses, vals = [], []
    since = 0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        neg = sample_negatives(g, n_neg, g.edges, neg_rng)
        edges = np.concatenate([train_pos, neg])
        target = np.concatenate([ones, np.zeros(len(neg))])
        logits, cache = M.forward(model, X, adj_train, edges, True, drop_rng)
        loss, dlogits = bce_with_logits(logits, target)
        if not np.isfinite(loss):
            raise NumericalDivergenceError(f"non-finite loss {loss} at epoch {epoch}")
        grads = M.backward(model, cache, dlogits)
        adam_step(model.params, grads, opt)

        val_auc = auroc(M.predict_logits(model, X, adj_val, val_edges), val_labels)
        losses.append(loss)
        vals.append(val_auc)
        if log_every and epoch % log_every == 0:
            logger.info("epoch %d loss %.4f val %.4f", epoch, loss, val_auc)
        if val_auc > best_auc:
            best_auc, best_epoch, best_model = val_auc, epoch, model.copy()
            since = 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    elapsed = time.perf_counter() - t0
    history = {
        "loss": losses,
        "val_auroc": vals,
        "best_val_auroc": float(best_auc),
        "best_epoch": best_epoch,
        "epochs_run": len(losses),
        "train_seconds": elapsed,
    }
    return best_model, history


def train(g, split, cfg, log_every=0):
    """Fit on train/val, then score the selected checkpoint once on the test role.

    The fitting loop is handed a copy of ``split`` with the test role emptied.
    """
    model, hist = fit_model(g, _without_test(split), cfg, log_every=log_every)
    result = evaluate(model, g, split, "test")
    report = RunReport(
        best_val_auroc=hist["best_val_auroc"],
        test_auroc=result["auroc"],
        best_epoch=hist["best_epoch"],
        epochs_run=hist["epochs_run"],
        loss_history=hist["loss"],
        val_history=hist["val_auroc"],
        param_count=M.param_count(model),
        config=cfg.to_dict(),
        seed=cfg.seed,
        timings={
            "train_seconds": hist["train_seconds"],
            "seconds_per_epoch": hist["train_seconds"] / max(hist["epochs_run"], 1),
        },
        test_class_mix={f"{u},{v}": val for (u, v), val in result["class_mix"].items()},
        gs={
            "graph": "test",
            "gs": result["gs"].gs,
            "gs_hm_hm": result["gs"].gs_hm_hm,
            "gs_ht_ht": result["gs"].gs_ht_ht,
        },
    )
    return model, report


def evaluate(model, g, split, role, scores=None):
    """Eval-mode AUROC, class-mix AUCs and gradient-separability trace for ``role``.

    ``scores`` overrides the model's predictions on the balanced eval set
    (used to check the harness with injected oracle scores).
    """
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    edges, labels = make_eval_set(split, role)
    adj = role_adjacency(g, split, role)
    if scores is None:
        scores = M.predict_edges(model, g, adj, edges)
    scores = np.asarray(scores, dtype=np.float64)
    k = len(split.positives[role])
    pos, neg = edges[:k], edges[k:]
    _, trace = M.message_passing(g, adj, model, train_mode=False)
    return {
        "auroc": auroc(scores, labels),
        "class_mix": class_mix_auc(scores[:k], scores[k:], pos, neg, g.labels),
        "gs": gradient_separability(trace, adj, pos, neg, g.labels, graph=role),
    }


# --- grids ---------------------------------------------------------------------------


def grid_size(space):
    return math.prod(len(v) for v in space.values())


def grid_expand(space, budget=None, seed=0, base=None):
    """Cartesian product of ``space`` as TrainConfigs, optionally a random subset.

    ``space`` maps TrainConfig field names to candidate values; fields not in
    ``space`` come from ``base``. With ``budget`` set, that many distinct grid
    points are drawn uniformly (seeded) without materializing the full product.
    """
    base = base or TrainConfig()
    keys = list(space)
    unknown = set(keys) - {f.name for f in dataclasses.fields(TrainConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    values = [list(space[k]) for k in keys]
    total = grid_size(space)
    if budget is None or budget >= total:
        combos = itertools.product(*values)
    else:
        rng = np.random.default_rng(seed)
        picks = np.sort(rng.choice(total, size=budget, replace=False))
        combos = (_decode_index(int(i), values) for i in picks)
    return [base.replace(**dict(zip(keys, c))) for c in combos]


def _decode_index(index, values):
    out = []
    for vals in reversed(values):
        index, r = divmod(index, len(vals))
        out.append(vals[r])
    return tuple(reversed(out))


# --- reports ---------------------------------------------------------------------------


def measure_inference(model, g, split, repeats=10):
    """Mean and standard deviation of wall-clock seconds for test-set prediction.

    One untimed warm-up call precedes the timed ones; ``sd`` is NaN for a single repeat.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    edges, _ = make_eval_set(split, "test")
    adj = role_adjacency(g, split, "test")
    M.predict_edges(model, g, adj, edges)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        M.predict_edges(model, g, adj, edges)
        times.append(time.perf_counter() - t0)
    sd = statistics.stdev(times) if repeats > 1 else float("nan")
    return {"mean": statistics.fmean(times), "sd": sd, "repeats": repeats}


def report_scaling(cfg, in_dim, layers=(1, 3, 5, 7, 9, 12), hidden=None):
    """Parameter counts of ``cfg``'s model as depth and width vary.

    Returns rows ``{"model", "num_layers", "hidden_dim", "params", "mp_params"}``.
    """
    hidden = hidden or (cfg.hidden_dim,)
    rows = []
    for d in hidden:
        for L in layers:
            c = dataclasses.replace(cfg, num_layers=L, hidden_dim=d)
            m = M.init_model(c, in_dim, seed=0)
            rows.append({
                "model": c.model,
                "num_layers": L,
                "hidden_dim": d,
                "params": M.param_count(m),
                "mp_params": M.message_passing_param_count(m),
            })
    return rows


# --- config files ----------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(field_type, raw, key):
    raw = raw.strip()
    try:
        if field_type in (bool, "bool"):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if field_type in (int, "int"):
            return int(raw)
        if field_type in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r} as {field_type}") from None
    return raw


def read_config(path):
    """Parse ``key = value`` lines (``#`` starts a comment) into a TrainConfig."""
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(types[key], raw, key)
    return TrainConfig(**values)


def write_config(cfg, path):
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in cfg.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n")
