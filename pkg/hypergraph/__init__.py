"""
Hypergraph package: local perception hypergraphs and HyPConv
"""

from .core import (
    FlattenedFeatures,
    GraphConvReference,
    Hypergraph,
    HyPConvLayer,
    build_hypergraph,
    dense_hypconv,
    e2v,
    flatten_for_graph,
    graph_conv_reference,
    hypconv,
    median_tau,
    propagation_matrix,
    restore_shape,
    v2e,
)
from .layers import HyPConv, HypergraphModule

__all__ = [
    "FlattenedFeatures",
    "GraphConvReference",
    "Hypergraph",
    "HyPConvLayer",
    "HyPConv",
    "HypergraphModule",
    "build_hypergraph",
    "dense_hypconv",
    "e2v",
    "flatten_for_graph",
    "graph_conv_reference",
    "hypconv",
    "median_tau",
    "propagation_matrix",
    "restore_shape",
    "v2e",
]
