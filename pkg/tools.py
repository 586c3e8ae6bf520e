"""
Image, mask and compositing helpers shared by every stage

Images are float tensors ``[B, 3, H, W]`` in [0, 1]; masks are ``[B, 1, H, W]``
with entries in {0, 1} where 1 marks the region to edit.
"""

import csv
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from exceptions import ValidationError

PathLike = Union[str, Path]


def pil_to_tensor(image: Image.Image) -> torch.Tensor:
    array = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(array.copy()).permute(2, 0, 1).unsqueeze(0)


def pil_to_mask(image: Image.Image) -> torch.Tensor:
    array = np.asarray(image.convert("L")) > 127
    return torch.from_numpy(array.astype(np.float32)).unsqueeze(0).unsqueeze(0)


def tensor_to_pil(image: torch.Tensor) -> Image.Image:
    if image.dim() == 4:
        image = image[0]
    array = (image.detach().clamp(0, 1) * 255.0).round().to(torch.uint8)
    return Image.fromarray(array.permute(1, 2, 0).cpu().numpy(), "RGB")


def mask_to_pil(mask: torch.Tensor) -> Image.Image:
    if mask.dim() == 4:
        mask = mask[0]
    array = (mask[0].detach() > 0.5).to(torch.uint8) * 255
    return Image.fromarray(array.cpu().numpy(), "L")


def load_image(path: PathLike) -> torch.Tensor:
    """Read an 8-bit PNG/JPEG as ``[1, 3, H, W]``"""
    with Image.open(path) as image:
        return pil_to_tensor(image)


def load_mask(path: PathLike) -> torch.Tensor:
    """Read a single-channel 0/255 mask as ``[1, 1, H, W]``"""
    with Image.open(path) as image:
        return pil_to_mask(image)


def save_image(image: torch.Tensor, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensor_to_pil(image).save(path, format="PNG")
    return path


def save_mask(mask: torch.Tensor, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mask_to_pil(mask).save(path, format="PNG")
    return path


def check_image(image: torch.Tensor, name: str = "image") -> torch.Tensor:
    if image.dim() != 4 or image.shape[1] != 3:
        raise ValidationError(f"{name} must be [B, 3, H, W], got {tuple(image.shape)}")
    if not torch.isfinite(image).all():
        raise ValidationError(f"{name} contains non-finite values")
    return image.clamp(0.0, 1.0)


def check_mask(mask: torch.Tensor, like: torch.Tensor = None, name: str = "mask") -> torch.Tensor:
    if mask.dim() != 4 or mask.shape[1] != 1:
        raise ValidationError(f"{name} must be [B, 1, H, W], got {tuple(mask.shape)}")
    if not ((mask == 0) | (mask == 1)).all():
        raise ValidationError(f"{name} must be strictly binary")
    if like is not None and (mask.shape[0] != like.shape[0] or mask.shape[2:] != like.shape[2:]):
        raise ValidationError(
            f"{name} {tuple(mask.shape)} is not aligned with image {tuple(like.shape)}"
        )
    return mask


def resize_image(image: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    if tuple(image.shape[2:]) == tuple(size):
        return image
    return F.interpolate(image, size=size, mode="bilinear", align_corners=False, antialias=True).clamp(0, 1)


def resize_mask(mask: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    if tuple(mask.shape[2:]) == tuple(size):
        return mask
    return F.interpolate(mask, size=size, mode="nearest")


def dilate_mask(mask: torch.Tensor, radius: int) -> torch.Tensor:
    """Binary dilation with a (2r+1) x (2r+1) square structuring element"""
    if radius < 0:
        raise ValidationError("Dilation radius must be >= 0")
    if radius == 0:
        return mask.clone()
    return F.max_pool2d(mask, kernel_size=2 * radius + 1, stride=1, padding=radius)


def gaussian_kernel(radius: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """1-D Gaussian of support ``[-radius, radius]`` with sigma = radius / 2"""
    sigma = radius / 2.0
    offsets = torch.arange(-radius, radius + 1, dtype=torch.float64)
    weights = torch.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return (weights / weights.sum()).to(dtype)


def feather_mask(mask: torch.Tensor, radius: int) -> torch.Tensor:
    """Blur the mask boundary outwards; pixels farther than ``radius`` stay exactly 0"""
    soft = mask.to(torch.float32)
    if radius <= 0:
        return soft
    kernel = gaussian_kernel(radius)
    size = kernel.numel()
    blurred = F.conv2d(soft, kernel.view(1, 1, 1, size), padding=(0, radius))
    blurred = F.conv2d(blurred, kernel.view(1, 1, size, 1), padding=(radius, 0))
    return torch.maximum(soft, blurred.clamp(0.0, 1.0))


def blend(original: torch.Tensor, generated: torch.Tensor, mask: torch.Tensor, radius: int = 2) -> torch.Tensor:
    """Composite ``generated`` into ``original`` through the feathered mask"""
    if original.shape != generated.shape:
        raise ValidationError(
            f"Cannot blend {tuple(generated.shape)} into {tuple(original.shape)}"
        )
    check_mask(mask, like=original)
    soft = feather_mask(mask, radius).to(original.dtype)
    mixed = soft * generated + (1.0 - soft) * original
    return torch.where(soft > 0, mixed, original)


def rasterize_bbox(bbox: Sequence[float], height: int, width: int) -> torch.Tensor:
    """Normalized ``[x0, y0, x1, y1]`` to a ``[1, 1, H, W]`` mask covering at least one pixel"""
    x0, y0, x1, y1 = bbox
    left = min(int(math.floor(x0 * width)), width - 1)
    top = min(int(math.floor(y0 * height)), height - 1)
    right = max(int(math.ceil(x1 * width)), left + 1)
    bottom = max(int(math.ceil(y1 * height)), top + 1)
    mask = torch.zeros(1, 1, height, width)
    mask[:, :, top:bottom, left:right] = 1.0
    return mask


def mask_bbox(mask: torch.Tensor) -> torch.Tensor:
    """Filled bounding box of a mask's nonzero pixels (empty mask stays empty)"""
    box = torch.zeros_like(mask)
    for b in range(mask.shape[0]):
        ys, xs = torch.nonzero(mask[b, 0] > 0.5, as_tuple=True)
        if ys.numel():
            box[b, 0, ys.min():ys.max() + 1, xs.min():xs.max() + 1] = 1.0
    return box


def write_loss_log(history: List[Dict[str, float]], path: PathLike, columns: Iterable[str]) -> Path:
    """Write a per-step training curve as CSV"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns)
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns)
        writer.writeheader()
        for record in history:
            writer.writerow({column: record[column] for column in columns})
    return path
