"""
Hypergraph construction and HyPConv message passing over flattened feature maps

Node features are laid out channel-first, ``[C, N]``, so a whole feature map
flattened to ``[B, C, H*W]`` can be processed one batch element at a time.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn.functional as F

from exceptions import ValidationError

ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": F.relu,
    "gelu": F.gelu,
}

# Pairwise distances are O(N^2 C); middle-block grids stay far below this.
DEFAULT_MAX_NODES = 4096
MIN_TAU = 1e-6


@dataclass(frozen=True, eq=False)
class FlattenedFeatures:
    """Feature map flattened to ``[B, C, N]`` with ``N = height * width``"""

    data: torch.Tensor
    height: int
    width: int

    def __post_init__(self):
        if self.data.dim() != 3:
            raise ValidationError(f"Flattened features must be [B, C, N], got {tuple(self.data.shape)}")
        if self.height < 1 or self.width < 1:
            raise ValidationError("height and width must be positive")
        if self.data.shape[2] != self.height * self.width:
            raise ValidationError(
                f"N={self.data.shape[2]} does not match height*width={self.height * self.width}"
            )
        if not torch.isfinite(self.data).all():
            raise ValidationError("Flattened features contain non-finite values")


def flatten_for_graph(features: torch.Tensor) -> FlattenedFeatures:
    """Flatten ``[B, C, H, W]`` into ``[B, C, H*W]``; position (h, w) maps to h*W + w"""
    if features.dim() != 4:
        raise ValidationError(f"Expected a 4-D feature map, got {tuple(features.shape)}")
    batch, channels, height, width = features.shape
    return FlattenedFeatures(
        data=features.reshape(batch, channels, height * width),
        height=height,
        width=width,
    )


def restore_shape(flat: FlattenedFeatures) -> torch.Tensor:
    batch, channels, _ = flat.data.shape
    return flat.data.reshape(batch, channels, flat.height, flat.width)


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Incidence representation: ``incidence[i, e] == 1`` iff node i is in hyperedge e"""

    incidence: torch.Tensor
    node_degrees: torch.Tensor = field(init=False, repr=False)
    edge_degrees: torch.Tensor = field(init=False, repr=False)

    def __post_init__(self):
        if self.incidence.dim() != 2:
            raise ValidationError("Incidence matrix must be 2-D [N, E]")
        if self.incidence.shape[0] < 1 or self.incidence.shape[1] < 1:
            raise ValidationError("Hypergraph needs at least one node and one hyperedge")
        binary = (self.incidence == 0) | (self.incidence == 1)
        if not binary.all():
            raise ValidationError("Incidence matrix must be binary")
        node_degrees = self.incidence.sum(dim=1)
        edge_degrees = self.incidence.sum(dim=0)
        if (edge_degrees < 1).any():
            raise ValidationError("Every hyperedge must contain at least one node")
        if (node_degrees < 1).any():
            raise ValidationError("Every node must belong to at least one hyperedge")
        object.__setattr__(self, "node_degrees", node_degrees)
        object.__setattr__(self, "edge_degrees", edge_degrees)

    @property
    def num_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def num_edges(self) -> int:
        return self.incidence.shape[1]

    @classmethod
    def from_edges(
        cls,
        edges: Sequence[Sequence[int]],
        num_nodes: int,
        dtype: torch.dtype = torch.float32,
    ) -> "Hypergraph":
        incidence = torch.zeros(num_nodes, len(edges), dtype=dtype)
        for e, members in enumerate(edges):
            for node in members:
                if not 0 <= node < num_nodes:
                    raise ValidationError(f"Node index {node} out of range for {num_nodes} nodes")
                incidence[node, e] = 1
        return cls(incidence)

    def members(self, edge: int) -> List[int]:
        return torch.nonzero(self.incidence[:, edge]).flatten().tolist()

    def to_debug_dict(self) -> Dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "incidence": [self.members(e) for e in range(self.num_edges)],
        }

    @classmethod
    def from_debug_dict(cls, payload: Dict) -> "Hypergraph":
        graph = cls.from_edges(payload["incidence"], payload["num_nodes"])
        if graph.num_edges != payload["num_edges"]:
            raise ValidationError("num_edges does not match the incidence lists")
        return graph

    def to(self, dtype: torch.dtype) -> "Hypergraph":
        return Hypergraph(self.incidence.to(dtype))


@dataclass(frozen=True, eq=False)
class HyPConvLayer:
    """Parameters of one HyPConv application: v2e transform, e2v transform, bias, activation"""

    weight_v2e: torch.Tensor
    weight_e2v: torch.Tensor
    bias: torch.Tensor
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"Unknown activation '{self.activation}', expected one of {sorted(ACTIVATIONS)}"
            )
        if self.weight_v2e.dim() != 2 or self.weight_e2v.dim() != 2 or self.bias.dim() != 1:
            raise ValidationError("HyPConv weights must be matrices and the bias a vector")
        if self.weight_v2e.shape[1] != self.weight_e2v.shape[0]:
            raise ValidationError(
                f"Inner widths disagree: {self.weight_v2e.shape[1]} vs {self.weight_e2v.shape[0]}"
            )
        if self.bias.shape[0] != self.weight_e2v.shape[1]:
            raise ValidationError("Bias length must equal the output width")
        for name in ("weight_v2e", "weight_e2v", "bias"):
            if not torch.isfinite(getattr(self, name)).all():
                raise ValidationError(f"{name} contains non-finite values")

    @property
    def in_channels(self) -> int:
        return self.weight_v2e.shape[0]

    @property
    def out_channels(self) -> int:
        return self.weight_e2v.shape[1]

    @classmethod
    def identity(cls, channels: int, dtype: torch.dtype = torch.float32) -> "HyPConvLayer":
        eye = torch.eye(channels, dtype=dtype)
        return cls(eye, eye.clone(), torch.zeros(channels, dtype=dtype), "identity")


@dataclass(frozen=True, eq=False)
class GraphConvReference:
    """Pairwise graph convolution, kept as a test oracle for HyPConv.

    Without ``edge_weights`` every neighbour (self included) gets weight 1/|N(i)|.
    With ``edge_weights`` the aggregation is ``sum_j w_ij h_j`` over the adjacency.
    """

    adjacency: torch.Tensor
    weight: torch.Tensor
    bias: torch.Tensor
    activation: str = "identity"
    edge_weights: Optional[torch.Tensor] = None

    def __post_init__(self):
        adjacency = self.adjacency
        if adjacency.dim() != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise ValidationError("Adjacency must be a square [N, N] matrix")
        if not torch.equal(adjacency, adjacency.T):
            raise ValidationError("Adjacency must be symmetric")
        if not (torch.diagonal(adjacency) == 1).all():
            raise ValidationError("Adjacency must have ones on the diagonal")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"Unknown activation '{self.activation}'")
        if self.edge_weights is not None and self.edge_weights.shape != adjacency.shape:
            raise ValidationError("edge_weights must match the adjacency shape")


def _check_features(node_features: torch.Tensor, expected: int, what: str) -> None:
    if node_features.dim() != 2:
        raise ValidationError(f"{what} features must be [C, count], got {tuple(node_features.shape)}")
    if node_features.shape[1] != expected:
        raise ValidationError(f"{what} count {node_features.shape[1]} does not match {expected}")


def pairwise_distances(features: torch.Tensor) -> torch.Tensor:
    """Euclidean distances between the C-dim channel vectors of ``features[C, N]``"""
    points = features.T.unsqueeze(0)
    # The matmul shortcut is not exact for identical points.
    dist = torch.cdist(points, points, compute_mode="donot_use_mm_for_euclid_dist")
    return dist.squeeze(0)


def median_tau(features: torch.Tensor) -> float:
    """Median off-diagonal pairwise distance, floored at ``MIN_TAU``"""
    num_nodes = features.shape[1]
    if num_nodes < 2:
        return MIN_TAU
    dist = pairwise_distances(features.detach())
    rows, cols = torch.triu_indices(num_nodes, num_nodes, offset=1)
    tau = dist[rows, cols].median().item()
    return max(tau, MIN_TAU)


def build_hypergraph(
    features: torch.Tensor,
    tau: Optional[float] = None,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> Hypergraph:
    """One hyperedge per node: ``e_i = {j : ||x_i - x_j|| < tau} U {i}``.

    ``features`` is one batch element ``[C, N]``. The incidence matrix is built
    from detached features and carries no gradient.
    """
    if features.dim() != 2:
        raise ValidationError(f"Expected features [C, N], got {tuple(features.shape)}")
    num_nodes = features.shape[1]
    if num_nodes < 1:
        raise ValidationError("Need at least one node")
    if num_nodes > max_nodes:
        raise ValidationError(f"{num_nodes} nodes exceeds the configured cap of {max_nodes}")
    if not torch.isfinite(features).all():
        raise ValidationError("Features contain non-finite values")
    if tau is None:
        tau = median_tau(features)
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")

    with torch.no_grad():
        dist = pairwise_distances(features.detach())
        within = dist < tau
        within |= torch.eye(num_nodes, dtype=torch.bool, device=features.device)
    return Hypergraph(within.to(features.dtype))


def v2e(node_features: torch.Tensor, hg: Hypergraph) -> torch.Tensor:
    """Hyperedge features as the mean of their member nodes: ``[C, N] -> [C, E]``"""
    _check_features(node_features, hg.num_nodes, "Nodes")
    incidence = hg.incidence.to(node_features.dtype)
    return (node_features @ incidence) / hg.edge_degrees.to(node_features.dtype)


def e2v(edge_features: torch.Tensor, hg: Hypergraph) -> torch.Tensor:
    """Node features as the mean of their incident hyperedges: ``[C, E] -> [C, N]``"""
    _check_features(edge_features, hg.num_edges, "Edges")
    incidence = hg.incidence.to(edge_features.dtype)
    return (edge_features @ incidence.T) / hg.node_degrees.to(edge_features.dtype)


def hypconv(node_features: torch.Tensor, hg: Hypergraph, layer: HyPConvLayer) -> torch.Tensor:
    """``sigma(e2v(v2e(X W_v2e)) W_e2v + b)`` on ``[C_in, N]`` node features"""
    _check_features(node_features, hg.num_nodes, "Nodes")
    if node_features.shape[0] != layer.in_channels:
        raise ValidationError(
            f"Layer expects {layer.in_channels} input channels, got {node_features.shape[0]}"
        )
    hidden = layer.weight_v2e.T @ node_features
    hidden = e2v(v2e(hidden, hg), hg)
    out = layer.weight_e2v.T @ hidden + layer.bias.unsqueeze(1)
    return ACTIVATIONS[layer.activation](out)


def propagation_matrix(hg: Hypergraph, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Dense ``D_v^-1 H D_e^-1 H^T`` built from explicit diagonal matrices"""
    incidence = hg.incidence.to(dtype)
    inv_dv = torch.diag(1.0 / incidence.sum(dim=1))
    inv_de = torch.diag(1.0 / incidence.sum(dim=0))
    return inv_dv @ incidence @ inv_de @ incidence.T


def dense_hypconv(node_features: torch.Tensor, hg: Hypergraph, layer: HyPConvLayer) -> torch.Tensor:
    """Brute-force oracle for :func:`hypconv` using the dense propagation matrix"""
    propagation = propagation_matrix(hg, node_features.dtype)
    mixed = (layer.weight_v2e.T @ node_features) @ propagation.T
    out = layer.weight_e2v.T @ mixed + layer.bias.unsqueeze(1)
    return ACTIVATIONS[layer.activation](out)


def graph_conv_reference(node_features: torch.Tensor, ref: GraphConvReference) -> torch.Tensor:
    _check_features(node_features, ref.adjacency.shape[0], "Nodes")
    adjacency = ref.adjacency.to(node_features.dtype)
    if ref.edge_weights is None:
        aggregation = adjacency / adjacency.sum(dim=1, keepdim=True)
    else:
        aggregation = adjacency * ref.edge_weights.to(node_features.dtype)
    out = ref.weight.T @ node_features @ aggregation.T + ref.bias.unsqueeze(1)
    return ACTIVATIONS[ref.activation](out)
