"""scikit-learn style wrapper around :func:`grafflp.training.train`."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import models as M
from .graph import Graph, build_graph
from .metrics import auroc
from .splits import SplitConfig, transductive_split
from .training import TrainConfig, role_adjacency, train

__all__ = ["GraffLinkPredictor", "check_graph", "check_edges"]


def check_graph(g):
    """Accept a :class:`Graph` or a ``(edges, features, labels)`` triple."""
    if isinstance(g, Graph):
        return g
    if isinstance(g, tuple) and len(g) == 3:
        return build_graph(*g)
    raise TypeError(f"expected a Graph or (edges, features, labels), got {type(g).__name__}")


def check_edges(edges, num_nodes):
    """Validate node pairs and return them as an ``(E, 2)`` int64 array."""
    arr = np.asarray(edges)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("edge indices must be integers")
    arr = arr.astype(np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"edges must have shape (E, 2), got {arr.shape}")
    if arr.min() < 0 or arr.max() >= num_nodes:
        raise IndexError(f"edge index out of range for {num_nodes} nodes")
    return arr


class GraffLinkPredictor(ClassifierMixin, BaseEstimator):
    """Transductive link predictor over a fixed node set.

    ``fit`` takes the graph (and optionally a ready :class:`EdgeSplit`);
    prediction methods take ``(E, 2)`` node pairs and score them on the
    test-time message-passing graph.

    Parameters mirror :class:`grafflp.training.TrainConfig`.

    Attributes
    ----------
    model_ : LinkModel
    report_ : RunReport
    split_ : EdgeSplit
    classes_ : ndarray
        Always ``[0, 1]``.
    """

    def __init__(
        self,
        model="graff",
        readout="gradient",
        lr=0.01,
        weight_decay=0.0,
        hidden_dim=128,
        mlp_dim=32,
        dropout=0.1,
        mlp_dropout=0.1,
        num_layers=3,
        mlp_layers=1,
        batch_norm=False,
        neg_ratio=1.0,
        step_size=0.5,
        max_epochs=3000,
        patience=300,
        source_term=True,
        w_param="diag_dominant",
        allow_out_of_space=False,
        seed=0,
    ):
        self.model = model
        self.readout = readout
        self.lr = lr
        self.weight_decay = weight_decay
        self.hidden_dim = hidden_dim
        self.mlp_dim = mlp_dim
        self.dropout = dropout
        self.mlp_dropout = mlp_dropout
        self.num_layers = num_layers
        self.mlp_layers = mlp_layers
        self.batch_norm = batch_norm
        self.neg_ratio = neg_ratio
        self.step_size = step_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.source_term = source_term
        self.w_param = w_param
        self.allow_out_of_space = allow_out_of_space
        self.seed = seed

    def _train_config(self):
        return TrainConfig(**self.get_params())

    def fit(self, X, y=None, split=None):
        """Train on graph ``X``; ``y`` is ignored (labels live on the graph).

        Without ``split`` a default transductive split seeded by ``seed`` is drawn.
        """
        g = check_graph(X)
        cfg = self._train_config()
        self.split_ = split if split is not None else transductive_split(
            g, SplitConfig(seed=self.seed)
        )
        self.graph_ = g
        self.model_, self.report_ = train(g, self.split_, cfg)
        self.adj_ = role_adjacency(g, self.split_, "test")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = g.features.shape[1]
        return self

    def decision_function(self, edges):
        check_is_fitted(self, "model_")
        edges = check_edges(edges, self.graph_.num_nodes)
        return M.predict_logits(self.model_, self.graph_, self.adj_, edges)

    def predict_proba(self, edges):
        check_is_fitted(self, "model_")
        edges = check_edges(edges, self.graph_.num_nodes)
        p = M.predict_edges(self.model_, self.graph_, self.adj_, edges)
        return np.stack([1.0 - p, p], axis=1)

    def predict(self, edges):
        return (self.decision_function(edges) > 0).astype(np.int64)

    def transform(self, edges):
        """Edge representations fed to the decoder (readout of the final node states)."""
        check_is_fitted(self, "model_")
        edges = check_edges(edges, self.graph_.num_nodes)
        Z, _ = M.message_passing(self.graph_, self.adj_, self.model_)
        return M.readout(Z, self.adj_, edges, self.model_.cfg.readout)

    def score(self, edges, y, sample_weight=None):
        """AUROC of the predicted probabilities against ``y``."""
        return auroc(self.decision_function(edges), y)
