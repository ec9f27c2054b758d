"""Mixture of diverse experts for imbalanced graph classification."""
from graphdive.config import TrainConfig, load_config
from graphdive.gnn import BackboneParams, GraphBatch, extract
from graphdive.graph import ClassStats, Dataset, Graph, LabelSet, class_stats, permute_nodes, validate_graph
from graphdive.kernels import BACKEND
from graphdive.model import GraphDive
from graphdive.moe import (
    MoeParams,
    elbo_probe,
    expert_predict,
    gate_prior,
    loss_post,
    loss_pri,
    mean_mix_predict,
    mixture_predict,
    posterior,
)
from graphdive.training import Checkpoint, TrainHistory, evaluate, expert_usage, split_dataset, sweep, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BackboneParams", "Checkpoint", "ClassStats", "Dataset", "Graph", "GraphBatch",
    "GraphDive", "LabelSet", "MoeParams", "TrainConfig", "TrainHistory", "class_stats",
    "elbo_probe", "evaluate", "expert_predict", "expert_usage", "extract", "gate_prior",
    "load_config", "loss_post", "loss_pri", "mean_mix_predict", "mixture_predict",
    "permute_nodes", "posterior", "split_dataset", "sweep", "train", "validate_graph",
]
