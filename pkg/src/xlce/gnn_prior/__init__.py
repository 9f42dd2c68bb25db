"""Learned prior updater: a message-passing network over the posterior's
pairwise dependency graph replaces the closed-form precision update."""

from .graph import GraphAttributes, MrfHyper, block_edge_mask, graph_attributes
from .network import (
    GnnPriorUpdater,
    HiddenState,
    aggregate,
    gnn_prior_update,
    init_hidden,
    propagate,
    readout,
)
from .params import GnnDims, GnnParams, init_params, load_checkpoint, save_checkpoint
from .training import TrainSettings, gradients, train

__all__ = [
    "GnnDims",
    "GnnParams",
    "GnnPriorUpdater",
    "GraphAttributes",
    "HiddenState",
    "MrfHyper",
    "TrainSettings",
    "aggregate",
    "block_edge_mask",
    "gnn_prior_update",
    "gradients",
    "graph_attributes",
    "init_hidden",
    "init_params",
    "load_checkpoint",
    "propagate",
    "readout",
    "save_checkpoint",
    "train",
]
