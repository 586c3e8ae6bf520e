"""
Synthetic structured images with inpainting masks
"""

import logging
from pathlib import Path
from typing import Tuple

import numpy as np
import torch
from PIL import Image, ImageDraw
from torch.utils.data import Dataset

from scenes import COLORS, KINDS, Shape, place_box, render_scene, textured_background
from tools import pil_to_tensor, pil_to_mask, save_image, save_mask

logger = logging.getLogger(__name__)

MASK_KINDS = ("rectangle", "ellipse", "freeform")


class SyntheticInpaintDataset(Dataset):
    """
    Scenes of 2-5 coloured shapes on textured backgrounds, each paired with a
    rectangle, ellipse or free-form brush mask. Sample ``idx`` depends only on
    ``(seed, idx)``.
    """

    def __init__(self, num_images: int = 500, image_size: int = 64, seed: int = 0):
        self.num_images = num_images
        self.image_size = image_size
        self.seed = seed

    def __len__(self):
        return self.num_images

    def __getitem__(self, idx: int) -> Tuple[torch.Tensor, torch.Tensor]:
        if not 0 <= idx < self.num_images:
            raise IndexError(idx)
        image, mask = self.render(idx)
        return pil_to_tensor(image)[0], pil_to_mask(mask)[0]

    def render(self, idx: int) -> Tuple[Image.Image, Image.Image]:
        rng = np.random.default_rng([self.seed, idx])
        size = self.image_size
        shapes = []
        for _ in range(int(rng.integers(2, 6))):
            side = int(rng.integers(size // 8, size // 3))
            box = place_box(rng, size, side, [s.box for s in shapes])
            if box is None:
                continue
            shapes.append(Shape(
                kind=KINDS[int(rng.integers(len(KINDS)))],
                color=list(COLORS)[int(rng.integers(len(COLORS)))],
                box=box,
            ))
        image, _ = render_scene(shapes, textured_background(rng, size))
        return image, random_mask(rng, size)

    def tensors(self) -> Tuple[torch.Tensor, torch.Tensor]:
        items = [self[i] for i in range(len(self))]
        return torch.stack([i for i, _ in items]), torch.stack([m for _, m in items])

    def write_cache(self, directory: Path) -> Path:
        """Write ``images/NNNNN.png`` and ``masks/NNNNN.png`` for every sample"""
        directory = Path(directory)
        for idx in range(len(self)):
            image, mask = self.render(idx)
            save_image(pil_to_tensor(image), directory / "images" / f"{idx:05d}.png")
            save_mask(pil_to_mask(mask), directory / "masks" / f"{idx:05d}.png")
        logger.info("Wrote %d inpainting samples to %s", len(self), directory)
        return directory


def random_mask(rng: np.random.Generator, size: int) -> Image.Image:
    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    kind = MASK_KINDS[int(rng.integers(len(MASK_KINDS)))]
    if kind == "freeform":
        points = [tuple(int(v) for v in rng.integers(0, size, size=2))]
        for _ in range(int(rng.integers(3, 7))):
            step = rng.integers(-size // 4, size // 4 + 1, size=2)
            x = int(np.clip(points[-1][0] + step[0], 0, size - 1))
            y = int(np.clip(points[-1][1] + step[1], 0, size - 1))
            points.append((x, y))
        draw.line(points, fill=255, width=int(rng.integers(size // 16 + 2, size // 6 + 3)), joint="curve")
    else:
        w, h = (int(v) for v in rng.integers(size // 6, size // 2, size=2))
        x0 = int(rng.integers(0, size - w))
        y0 = int(rng.integers(0, size - h))
        box = [x0, y0, x0 + w, y0 + h]
        if kind == "rectangle":
            draw.rectangle(box, fill=255)
        else:
            draw.ellipse(box, fill=255)
    return canvas
