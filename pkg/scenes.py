"""
Procedural scenes of coloured shapes shared by the synthetic corpora
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

COLORS: Dict[str, Tuple[int, int, int]] = {
    "red": (220, 40, 40),
    "green": (40, 170, 60),
    "blue": (40, 80, 220),
    "yellow": (235, 210, 40),
    "purple": (150, 60, 190),
    "orange": (245, 140, 30),
}

KINDS = ("circle", "square", "triangle")

Box = Tuple[int, int, int, int]


@dataclass(frozen=True)
class Shape:
    kind: str
    color: str
    box: Box  # x0, y0, x1, y1 inclusive

    @property
    def size(self) -> int:
        return self.box[2] - self.box[0] + 1

    @property
    def center(self) -> Tuple[float, float]:
        x0, y0, x1, y1 = self.box
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0

    @property
    def rgb(self) -> Tuple[int, int, int]:
        return COLORS[self.color]


def shape_mask(shape: Shape, size: int) -> Image.Image:
    """Rasterize a shape into an 'L' image with 255 inside"""
    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    x0, y0, x1, y1 = shape.box
    if shape.kind == "circle":
        draw.ellipse([x0, y0, x1, y1], fill=255)
    elif shape.kind == "square":
        draw.rectangle([x0, y0, x1, y1], fill=255)
    elif shape.kind == "triangle":
        draw.polygon([((x0 + x1) / 2.0, y0), (x1, y1), (x0, y1)], fill=255)
    else:
        raise ValueError(f"Unknown shape kind '{shape.kind}'")
    return canvas


def textured_background(rng: np.random.Generator, size: int, low: int = 90, high: int = 170) -> Image.Image:
    """Two-tone gradient with stripes and mild noise"""
    base = rng.integers(low, high, size=(2, 3)).astype(np.float32)
    ramp = np.linspace(0.0, 1.0, size, dtype=np.float32)
    vertical = rng.random() < 0.5
    weights = ramp[:, None] if vertical else ramp[None, :]
    weights = np.broadcast_to(weights, (size, size))[..., None]
    pixels = base[0] * (1.0 - weights) + base[1] * weights
    period = int(rng.integers(6, 16))
    stripes = ((np.arange(size) // period) % 2).astype(np.float32) * 12.0
    pixels += (stripes[None, :] if vertical else stripes[:, None])[..., None]
    pixels += rng.normal(0.0, 4.0, size=pixels.shape)
    return Image.fromarray(np.clip(pixels, 0, 255).astype(np.uint8), "RGB")


def render_scene(shapes: Sequence[Shape], background: Image.Image) -> Tuple[Image.Image, List[Image.Image]]:
    """Paint shapes over the background; returns the image and one mask per shape.

    Colour is pasted through the shape's own mask, so each mask covers exactly the
    pixels painted for that shape.
    """
    image = background.copy()
    masks = []
    for shape in shapes:
        mask = shape_mask(shape, image.size[0])
        image.paste(shape.rgb, (0, 0), mask)
        masks.append(mask)
    return image, masks


def place_box(rng: np.random.Generator, size: int, side: int, taken: Sequence[Box],
              gap: int = 2, attempts: int = 200, x_range: Optional[Tuple[int, int]] = None) -> Optional[Box]:
    """Random square box that keeps ``gap`` pixels away from every taken box"""
    x_lo, x_hi = x_range if x_range is not None else (0, size - side)
    x_hi = min(x_hi, size - side)
    if x_hi < x_lo:
        return None
    for _ in range(attempts):
        x0 = int(rng.integers(x_lo, x_hi + 1))
        y0 = int(rng.integers(0, size - side + 1))
        box = (x0, y0, x0 + side - 1, y0 + side - 1)
        if all(_separated(box, other, gap) for other in taken):
            return box
    return None


def _separated(a: Box, b: Box, gap: int) -> bool:
    return (
        a[2] + gap < b[0]
        or b[2] + gap < a[0]
        or a[3] + gap < b[1]
        or b[3] + gap < a[1]
    )
