"""GEE-seeded graph neural networks for node clustering and classification."""
from .errors import (
    DatasetFormatError,
    DegenerateFitError,
    DegenerateGraphError,
    EmptyClassError,
    EmptyMaskError,
    GnnSeedError,
    InfeasibleSplitError,
    InsufficientPointsError,
    NodeIndexError,
    ShapeError,
)
from .gcn import TrainConfig, dmon_loss, train_supervised, train_unsupervised, xavier_init
from .gee import supervised_gee, unsupervised_gee
from .graph import MASKED, Graph, from_edge_list, normalized_adjacency
from .metrics import accuracy, ari
from .pipelines import classify, classify_all, cluster, split_nodes

__version__ = "0.1.0"
