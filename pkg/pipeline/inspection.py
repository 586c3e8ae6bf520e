"""
Debug dump of the hypergraph an inpainter builds for one image
"""

from typing import Optional

import torch

from exceptions import ValidationError
from hypergraph import build_hypergraph, flatten_for_graph, median_tau
from inpaint.vae import InpaintModel
from tools import resize_image

LAYERS = ("encoder", "decoder")


@torch.no_grad()
def inspect_hypergraph(model: InpaintModel, image: torch.Tensor, tau: Optional[float] = None,
                       layer: str = "encoder", mask: Optional[torch.Tensor] = None) -> dict:
    """Hypergraph over the middle-block features of ``layer`` as debug JSON"""
    if layer not in LAYERS:
        raise ValidationError(f"layer must be one of {LAYERS}")
    size = model.config.image_size
    image = resize_image(image, (size, size))
    mask = torch.zeros(1, 1, size, size) if mask is None else mask
    model.eval()
    network_input = model.network_input(image, mask)
    if layer == "encoder":
        features = model.encoder.middle_features(network_input)
    else:
        features = model.decoder.middle_features(model.encoder(network_input).mean)
    flat = flatten_for_graph(features)
    nodes = flat.data[0]
    resolved = median_tau(nodes) if tau is None else tau
    graph = build_hypergraph(nodes, resolved, model.config.max_nodes)
    return {
        "layer": layer,
        "height": flat.height,
        "width": flat.width,
        "tau": resolved,
        **graph.to_debug_dict(),
    }
