"""Heterogeneous graph propagation for group-user-item click prediction."""

from .datagen import GenConfig, generate
from .dataset import Dataset, load_dataset, save_dataset
from .hetgraph import EdgeType, HetGraph, NodeType, build_graph, normalized_adjacency
from .model import HGP, GraphContext
from .trainer import TrainConfig, TrainedModel, evaluate, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
