"""
Trainable hypergraph layers for convolutional feature maps
"""

import logging
from typing import List, Optional

import torch
import torch.nn as nn

from .core import (
    DEFAULT_MAX_NODES,
    FlattenedFeatures,
    Hypergraph,
    HyPConvLayer,
    build_hypergraph,
    flatten_for_graph,
    hypconv,
    median_tau,
    restore_shape,
)

logger = logging.getLogger(__name__)


class HyPConv(nn.Module):
    """HyPConv with shared v2e/e2v weights, applied per batch element"""

    def __init__(self, in_channels: int, out_channels: int, hidden_channels: Optional[int] = None,
                 activation: str = "gelu"):
        super().__init__()
        hidden_channels = hidden_channels or out_channels
        self.activation = activation
        self.weight_v2e = nn.Parameter(torch.empty(in_channels, hidden_channels))
        self.weight_e2v = nn.Parameter(torch.empty(hidden_channels, out_channels))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        nn.init.xavier_uniform_(self.weight_v2e)
        nn.init.xavier_uniform_(self.weight_e2v)

    def as_layer(self) -> HyPConvLayer:
        return HyPConvLayer(self.weight_v2e, self.weight_e2v, self.bias, self.activation)

    def forward(self, node_features: torch.Tensor, graphs: List[Hypergraph]) -> torch.Tensor:
        """``node_features`` is ``[B, C_in, N]`` with one hypergraph per batch element"""
        layer = self.as_layer()
        outputs = [hypconv(node_features[b], graphs[b], layer) for b in range(node_features.shape[0])]
        return torch.stack(outputs)


class HypergraphModule(nn.Module):
    """Flatten a feature map, build its local perception hypergraph, run HyPConv, restore.

    The HyPConv output is added to the input, so zero e2v weights and bias make the
    module an exact identity.
    """

    def __init__(self, channels: int, tau: Optional[float] = None, max_nodes: int = DEFAULT_MAX_NODES,
                 activation: str = "gelu"):
        super().__init__()
        self.tau = tau
        self.max_nodes = max_nodes
        self.conv = HyPConv(channels, channels, activation=activation)

    def resolve_tau(self, flat: FlattenedFeatures) -> float:
        # Median over the first batch element, recomputed every forward pass.
        if self.tau is not None:
            return self.tau
        return median_tau(flat.data[0].detach())

    def build_graphs(self, flat: FlattenedFeatures) -> List[Hypergraph]:
        tau = self.resolve_tau(flat)
        logger.debug("Building hypergraphs over %d nodes, tau=%.4f", flat.data.shape[2], tau)
        return [build_hypergraph(flat.data[b], tau, self.max_nodes) for b in range(flat.data.shape[0])]

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        flat = flatten_for_graph(features)
        mixed = self.conv(flat.data, self.build_graphs(flat))
        return features + restore_shape(FlattenedFeatures(mixed, flat.height, flat.width))

    @torch.no_grad()
    def reset_to_identity(self) -> None:
        self.conv.weight_e2v.zero_()
        self.conv.bias.zero_()
