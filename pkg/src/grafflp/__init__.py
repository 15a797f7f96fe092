"""Gradient-flow graph networks for link prediction on heterophilic graphs.

The main entry points are :class:`GraffLinkPredictor` (scikit-learn style),
:func:`train` for the lower-level harness, and the ``grafflp`` command line.
"""

from .estimator import GraffLinkPredictor
from .graph import (
    DegenerateMetricError,
    Graph,
    adjusted_homophily,
    build_graph,
    dirichlet_energy,
    edge_gradient,
    edge_homophily,
    load_bundle,
    normalized_adjacency,
    save_bundle,
)
from .metrics import auroc, gradient_separability
from .models import GraffConfig, init_model, predict_edges
from .splits import (
    SplitConfig,
    generate_chain_graph,
    generate_grid_graph,
    sample_negatives,
    transductive_split,
)
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "GraffLinkPredictor",
    "DegenerateMetricError",
    "Graph",
    "adjusted_homophily",
    "build_graph",
    "dirichlet_energy",
    "edge_gradient",
    "edge_homophily",
    "load_bundle",
    "normalized_adjacency",
    "save_bundle",
    "auroc",
    "gradient_separability",
    "GraffConfig",
    "init_model",
    "predict_edges",
    "SplitConfig",
    "generate_chain_graph",
    "generate_grid_graph",
    "sample_negatives",
    "transductive_split",
    "TrainConfig",
    "evaluate",
    "train",
]
