"""
Inpainting package: hypergraph-augmented masked VAE
"""

from .data import SyntheticInpaintDataset, random_mask
from .train import evaluate_inpainter, split_dataset, train_inpainter
from .vae import (
    InpaintConfig,
    InpaintLoss,
    InpaintModel,
    LatentDistribution,
    count_parameters,
    generate_fill,
    inpaint,
    load_checkpoint,
    masked_region_mse,
    mean_color_fill,
    save_checkpoint,
    vae_inpaint_loss,
)

__all__ = [
    "InpaintConfig",
    "InpaintLoss",
    "InpaintModel",
    "LatentDistribution",
    "SyntheticInpaintDataset",
    "count_parameters",
    "evaluate_inpainter",
    "generate_fill",
    "inpaint",
    "load_checkpoint",
    "masked_region_mse",
    "mean_color_fill",
    "random_mask",
    "save_checkpoint",
    "split_dataset",
    "train_inpainter",
    "vae_inpaint_loss",
]
