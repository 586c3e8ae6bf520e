"""
Masked-image VAE with a hypergraph module after the encoder and decoder middle blocks
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, validator

from exceptions import ModelNotReadyError, ValidationError
from hypergraph import HypergraphModule
from tools import blend, check_image, check_mask

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "inpaint"


class InpaintConfig(BaseModel):
    """Hyperparameters of the inpainting VAE and its training run"""

    image_size: int = 64
    latent_dim: int = 128
    channel_widths: List[int] = [32, 64, 128]
    head_channels: int = 16
    use_hypergraph: bool = True
    tau: Optional[float] = None
    max_nodes: int = 4096
    beta: float = 1e-3
    inside_weight: float = 4.0
    learning_rate: float = 1e-3
    batch_size: int = 16
    steps: int = 2000
    num_images: int = 500
    held_out: int = 50
    checkpoint_every: int = 500
    seed: int = 0

    @validator("image_size")
    def power_of_two(cls, value):
        if value < 4 or value > 128 or value & (value - 1):
            raise ValueError("image_size must be a power of two between 4 and 128")
        return value

    @validator("channel_widths")
    def nonempty_widths(cls, value):
        if not value or any(w < 1 for w in value):
            raise ValueError("channel_widths must be a nonempty list of positive widths")
        return value

    @validator("tau")
    def positive_tau(cls, value):
        if value is not None and not value > 0:
            raise ValueError("tau must be positive")
        return value

    @validator("beta")
    def nonnegative_beta(cls, value):
        if value < 0:
            raise ValueError("beta must be >= 0")
        return value

    @validator("inside_weight")
    def inside_weight_at_least_one(cls, value):
        if value < 1:
            raise ValueError("inside_weight must be >= 1")
        return value

    @property
    def grid_size(self) -> int:
        return self.image_size // 2 ** (len(self.channel_widths) - 1)


@dataclass(frozen=True, eq=False)
class LatentDistribution:
    mean: torch.Tensor
    log_variance: torch.Tensor

    def sample(self, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        noise = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype,
                            device=self.mean.device)
        return self.mean + torch.exp(0.5 * self.log_variance) * noise


class InpaintLoss(NamedTuple):
    total: torch.Tensor
    reconstruction: torch.Tensor
    kl: torch.Tensor


class LayerNorm2d(nn.Module):
    """Per-pixel normalization over channels; keeps receptive fields local"""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(1, keepdim=True)
        var = (x - mean).pow(2).mean(1, keepdim=True)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return self.weight[:, None, None] * x + self.bias[:, None, None]


class ResidualBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.block = nn.Sequential(
            LayerNorm2d(in_channels),
            nn.SiLU(),
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            LayerNorm2d(out_channels),
            nn.SiLU(),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
        )
        self.skip = nn.Identity() if in_channels == out_channels else nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.skip(x) + self.block(x)


class Downsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


def _hypergraph_or_identity(config: InpaintConfig, channels: int) -> nn.Module:
    if not config.use_hypergraph:
        return nn.Identity()
    return HypergraphModule(channels, tau=config.tau, max_nodes=config.max_nodes)


class Encoder(nn.Module):
    """conv -> residual/downsample stack -> middle block -> hypergraph -> latent head"""

    def __init__(self, config: InpaintConfig):
        super().__init__()
        widths = config.channel_widths
        self.conv_in = nn.Conv2d(4, widths[0], 3, padding=1)
        blocks = []
        previous = widths[0]
        for level, width in enumerate(widths):
            blocks.append(ResidualBlock(previous, width))
            if level < len(widths) - 1:
                blocks.append(Downsample(width))
            previous = width
        self.down = nn.Sequential(*blocks)
        self.middle = ResidualBlock(previous, previous)
        self.hypergraph = _hypergraph_or_identity(config, previous)
        self.head = nn.Sequential(LayerNorm2d(previous), nn.SiLU(), nn.Conv2d(previous, config.head_channels, 1))
        self.to_latent = nn.Linear(config.head_channels * config.grid_size ** 2, 2 * config.latent_dim)

    def middle_features(self, x: torch.Tensor) -> torch.Tensor:
        return self.middle(self.down(self.conv_in(x)))

    def forward(self, x: torch.Tensor) -> LatentDistribution:
        features = self.hypergraph(self.middle_features(x))
        stats = self.to_latent(self.head(features).flatten(1))
        mean, log_variance = stats.chunk(2, dim=1)
        return LatentDistribution(mean, log_variance.clamp(-30.0, 20.0))


class Decoder(nn.Module):
    """latent -> middle block -> hypergraph -> residual/upsample stack -> RGB in [0, 1]"""

    def __init__(self, config: InpaintConfig):
        super().__init__()
        widths = config.channel_widths
        self.grid_size = config.grid_size
        self.head_channels = config.head_channels
        self.from_latent = nn.Linear(config.latent_dim, config.head_channels * config.grid_size ** 2)
        self.conv_in = nn.Conv2d(config.head_channels, widths[-1], 3, padding=1)
        self.middle = ResidualBlock(widths[-1], widths[-1])
        self.hypergraph = _hypergraph_or_identity(config, widths[-1])
        blocks = []
        previous = widths[-1]
        for level in reversed(range(len(widths))):
            blocks.append(ResidualBlock(previous, widths[level]))
            if level > 0:
                blocks.append(Upsample(widths[level]))
            previous = widths[level]
        self.up = nn.Sequential(*blocks)
        self.conv_out = nn.Sequential(LayerNorm2d(widths[0]), nn.SiLU(), nn.Conv2d(widths[0], 3, 3, padding=1))

    def middle_features(self, z: torch.Tensor) -> torch.Tensor:
        grid = self.from_latent(z).view(-1, self.head_channels, self.grid_size, self.grid_size)
        return self.middle(self.conv_in(grid))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        features = self.hypergraph(self.middle_features(z))
        return torch.sigmoid(self.conv_out(self.up(features)))


class InpaintModel(nn.Module):
    def __init__(self, config: Optional[InpaintConfig] = None):
        super().__init__()
        self.config = config or InpaintConfig()
        self.encoder = Encoder(self.config)
        self.decoder = Decoder(self.config)
        self.trained = False

    def _check_inputs(self, image: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        image = check_image(image)
        check_mask(mask, like=image)
        size = self.config.image_size
        if image.shape[2:] != (size, size):
            raise ValidationError(f"Model expects {size}x{size} images, got {tuple(image.shape[2:])}")
        return image

    def network_input(self, image: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        image = self._check_inputs(image, mask)
        mask = mask.to(image.dtype)
        return torch.cat([image * (1.0 - mask), mask], dim=1)

    def encode(self, image: torch.Tensor, mask: torch.Tensor) -> LatentDistribution:
        return self.encoder(self.network_input(image, mask))

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.dim() != 2 or z.shape[1] != self.config.latent_dim:
            raise ValidationError(f"Latent must be [B, {self.config.latent_dim}], got {tuple(z.shape)}")
        if not torch.isfinite(z).all():
            raise ValidationError("Latent contains non-finite values")
        return self.decoder(z)

    def forward(self, image: torch.Tensor, mask: torch.Tensor, sample: bool = True,
                generator: Optional[torch.Generator] = None):
        dist = self.encode(image, mask)
        z = dist.sample(generator) if sample else dist.mean
        return self.decode(z), dist

    @torch.no_grad()
    def generate(self, image: torch.Tensor, mask: torch.Tensor, samples: int = 1,
                 generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Raw decode of the posterior mean; ``samples > 1`` averages sampled decodes"""
        if samples < 1:
            raise ValidationError("samples must be >= 1")
        dist = self.encode(image, mask)
        if samples == 1:
            return self.decode(dist.mean)
        decodes = [self.decode(dist.sample(generator)) for _ in range(samples)]
        return torch.stack(decodes).mean(dim=0)

    def hypergraph_modules(self) -> List[nn.Module]:
        return [m for m in (self.encoder.hypergraph, self.decoder.hypergraph) if isinstance(m, HypergraphModule)]


def vae_inpaint_loss(
    reconstruction: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor,
    dist: LatentDistribution,
    beta: float = 1e-3,
    inside_weight: float = 4.0,
) -> InpaintLoss:
    """Mask-weighted squared error plus ``beta`` times the KL to a standard normal"""
    if reconstruction.shape != target.shape:
        raise ValidationError(
            f"Reconstruction {tuple(reconstruction.shape)} does not match target {tuple(target.shape)}"
        )
    if mask.shape[0] != target.shape[0] or mask.shape[2:] != target.shape[2:]:
        raise ValidationError("Mask is not aligned with the target")
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    if inside_weight < 1:
        raise ValidationError("inside_weight must be >= 1")
    weights = 1.0 + (inside_weight - 1.0) * mask.to(target.dtype)
    reconstruction_term = (weights * (reconstruction - target) ** 2).mean()
    mean, log_variance = dist.mean, dist.log_variance
    kl = -0.5 * torch.mean(1.0 + log_variance - mean ** 2 - torch.exp(log_variance))
    return InpaintLoss(reconstruction_term + beta * kl, reconstruction_term, kl)


def generate_fill(model: Optional[InpaintModel], image: torch.Tensor, mask: torch.Tensor, samples: int = 1,
                  generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Raw decode of a trained model in eval mode; the caller composites it"""
    if model is None or not model.trained:
        raise ModelNotReadyError("Inpainting needs a trained model")
    was_training = model.training
    model.eval()
    try:
        return model.generate(image, mask, samples=samples, generator=generator)
    finally:
        model.train(was_training)


def inpaint(model: Optional[InpaintModel], image: torch.Tensor, mask: torch.Tensor, samples: int = 1,
            blend_radius: int = 2, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Fill the masked region and composite it into the original image"""
    generated = generate_fill(model, image, mask, samples, generator)
    return blend(image.clamp(0, 1), generated.to(image.dtype), mask, blend_radius)


def mean_color_fill(image: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Baseline: masked pixels take the mean colour of the unmasked pixels"""
    keep = 1.0 - mask
    counts = keep.sum(dim=(2, 3), keepdim=True).clamp_min(1.0)
    mean_color = (image * keep).sum(dim=(2, 3), keepdim=True) / counts
    return image * keep + mean_color * mask


def masked_region_mse(prediction: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> float:
    selected = mask.expand_as(target) > 0.5
    if not selected.any():
        raise ValidationError("Mask selects no pixels")
    return F.mse_loss(prediction[selected], target[selected]).item()


def save_checkpoint(model: InpaintModel, path: Union[str, Path], step: Optional[int] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kind": CHECKPOINT_KIND,
            "config_json": json.dumps(model.config.dict(), sort_keys=True),
            "step": -1 if step is None else step,
            "state_dict": model.state_dict(),
        },
        path,
    )
    logger.info("Saved inpainting checkpoint to %s", path)
    return path


def load_checkpoint(path: Union[str, Path]) -> InpaintModel:
    path = Path(path)
    if not path.exists():
        raise ModelNotReadyError(f"Inpainting checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("kind") != CHECKPOINT_KIND:
        raise ModelNotReadyError(f"{path} is not an inpainting checkpoint")
    model = InpaintModel(InpaintConfig(**json.loads(payload["config_json"])))
    model.load_state_dict(payload["state_dict"])
    model.trained = True
    model.eval()
    return model


def count_parameters(module: nn.Module) -> int:
    return sum(math.prod(p.shape) for p in module.parameters())
