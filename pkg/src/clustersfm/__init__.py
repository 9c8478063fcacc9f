"""Divide-and-conquer structure from motion: image clustering, local solves, similarity merging."""

from .clustering import ClusteringParams, ClusterSet, cluster_images
from .graph import WeightedGraph, balanced_partition, build_graph, peel_to_center, spanning_tree
from .merge import MergeParams, MergedModel, build_merge_graph, merge_all
from .reconstruction import CameraPose, Reconstruction
from .sim3 import RansacParams, SimilarityTransform, estimate_similarity

__version__ = "0.1.0"

__all__ = [
    "CameraPose", "ClusterSet", "ClusteringParams", "MergeParams", "MergedModel", "RansacParams",
    "Reconstruction", "SimilarityTransform", "WeightedGraph", "balanced_partition", "build_graph",
    "build_merge_graph", "cluster_images", "estimate_similarity", "merge_all", "peel_to_center",
    "spanning_tree",
]
