"""
Image-quality metrics over whole images or background regions

Every function takes ``[B, 3, H, W]`` images in [0, 1]. ``region_mask`` selects the
pixels that count (1 = included); background metrics pass ``1 - edit_mask``.
"""

import math
from typing import Optional, Protocol, Sequence

import torch
import torch.nn.functional as F

from exceptions import ValidationError
from .extractors import FeatureExtractor, RandomConvPyramid

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 1.0


class JointEmbedder(Protocol):
    def embed_image(self, image: torch.Tensor) -> torch.Tensor:
        ...

    def embed_text(self, text: str) -> torch.Tensor:
        ...


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"Images differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() != 4:
        raise ValidationError(f"Expected [B, C, H, W] images, got {tuple(a.shape)}")


def mse(a: torch.Tensor, b: torch.Tensor, region_mask: Optional[torch.Tensor] = None) -> float:
    _check_pair(a, b)
    diff = (a.double() - b.double()) ** 2
    if region_mask is None:
        return diff.mean().item()
    selected = region_mask.double().expand_as(diff) > 0.5
    if not selected.any():
        raise ValidationError("Metric region is empty")
    return diff[selected].mean().item()


def psnr(a: torch.Tensor, b: torch.Tensor, region_mask: Optional[torch.Tensor] = None,
         cap: float = PSNR_CAP_DB) -> float:
    error = mse(a, b, region_mask)
    if error == 0.0:
        return cap
    return min(10.0 * math.log10(DATA_RANGE ** 2 / error), cap)


def ssim(a: torch.Tensor, b: torch.Tensor, window: int = SSIM_WINDOW,
         region_mask: Optional[torch.Tensor] = None) -> float:
    """
    Mean SSIM over valid ``window`` x ``window`` uniform windows of the channel-mean image.

    With ``region_mask`` only windows that overlap the region are averaged.
    """
    _check_pair(a, b)
    if a.shape[2] < window or a.shape[3] < window:
        raise ValidationError(f"Images smaller than the {window}x{window} SSIM window")
    x = a.double().mean(dim=1, keepdim=True)
    y = b.double().mean(dim=1, keepdim=True)
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mu_x = F.avg_pool2d(x, window, stride=1)
    mu_y = F.avg_pool2d(y, window, stride=1)
    var_x = F.avg_pool2d(x * x, window, stride=1) - mu_x ** 2
    var_y = F.avg_pool2d(y * y, window, stride=1) - mu_y ** 2
    cov = F.avg_pool2d(x * y, window, stride=1) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    score = numerator / denominator
    if region_mask is None:
        return score.mean().item()
    overlap = F.avg_pool2d(_region(region_mask, a), window, stride=1) > 0
    return score[overlap].mean().item()


def lpips_proxy(a: torch.Tensor, b: torch.Tensor, extractor: Optional[FeatureExtractor] = None,
                region_mask: Optional[torch.Tensor] = None) -> float:
    """
    Mean squared distance of channel-normalized features, averaged over layers.

    With ``region_mask`` each layer averages only the cells whose footprint overlaps the region.
    """
    _check_pair(a, b)
    extractor = extractor or RandomConvPyramid()
    region = None if region_mask is None else _region(region_mask, a)
    distances = []
    with torch.no_grad():
        for fa, fb in zip(extractor(a), extractor(b)):
            na = fa / (fa.norm(dim=1, keepdim=True) + 1e-10)
            nb = fb / (fb.norm(dim=1, keepdim=True) + 1e-10)
            distance = ((na - nb) ** 2).sum(dim=1, keepdim=True)
            if region is None:
                distances.append(distance.mean())
            else:
                distances.append(distance[F.adaptive_avg_pool2d(region, distance.shape[2:]) > 0].mean())
    return torch.stack(distances).mean().item()


def _region(region_mask: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    region = (region_mask.double() > 0.5).double()
    if region.dim() != 4 or region.shape[2:] != like.shape[2:]:
        raise ValidationError(f"Region mask {tuple(region_mask.shape)} does not match images {tuple(like.shape)}")
    region = region.amax(dim=1, keepdim=True).expand(like.shape[0], 1, -1, -1).contiguous()
    if not region.any():
        raise ValidationError("Metric region is empty")
    return region


def clip_sim(image: torch.Tensor, text: str, embedder: Optional[JointEmbedder] = None) -> Optional[float]:
    """Cosine similarity of image and text embeddings; ``None`` when no embedder is configured"""
    if embedder is None:
        return None
    image_vector = embedder.embed_image(image).flatten().double()
    text_vector = embedder.embed_text(text).flatten().double()
    return F.cosine_similarity(image_vector, text_vector, dim=0).item()


def background_only(a: torch.Tensor, b: torch.Tensor, edit_mask: torch.Tensor):
    """Zero the edited region in both images"""
    keep = 1.0 - edit_mask.to(a.dtype)
    return a * keep, b * keep


def mean_or_none(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return sum(present) / len(present)
