"""Accident prediction on road networks with angular and directional message passing."""

from .geometry import angle_set, angular_summary, directed_angle, edge_direction, haversine, nearest_node
from .harness import TrainConfig, multi_seed_report, train
from .ingest import AccidentRecord, Dataset, build_dataset, load_dataset, save_dataset
from .roadgraph import EdgeRecord, NodeRecord, RoadGraph, build_graph, in_neighbors
from .synth import SynthSpec, generate
from .travel import TravelModel, build_model

__version__ = "0.1.0"

__all__ = [
    "AccidentRecord", "Dataset", "EdgeRecord", "NodeRecord", "RoadGraph", "SynthSpec",
    "TrainConfig", "TravelModel", "angle_set", "angular_summary", "build_dataset", "build_graph",
    "build_model", "directed_angle", "edge_direction", "generate", "haversine", "in_neighbors",
    "load_dataset", "multi_seed_report", "nearest_node", "save_dataset", "train",
]
