"""
Synthetic referring-segmentation corpus of coloured shapes
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image

from exceptions import ValidationError
from scenes import COLORS, KINDS, Shape, place_box, render_scene, shape_mask, textured_background
from tools import load_image, load_mask, pil_to_mask, pil_to_tensor, save_image, save_mask
from .tokenizer import RESPONSE_TEMPLATE, SegQuery, Vocabulary, build_query, default_vocabulary, query_object

logger = logging.getLogger(__name__)

FAMILIES = ("attribute", "superlative", "spatial", "count-position", "background")
DEFAULT_RATIOS: Dict[str, float] = {
    "attribute": 0.2,
    "superlative": 0.2,
    "spatial": 0.2,
    "count-position": 0.2,
    "background": 0.2,
}
DIRECTIONS = ("left", "right", "top", "bottom")
SIZE_MARGIN = 4
POSITION_MARGIN = 6
MAX_ATTEMPTS = 200


@dataclass(frozen=True, eq=False)
class SegSample:
    image: torch.Tensor  # [1, 3, H, W]
    query: SegQuery
    gt_mask: torch.Tensor  # [1, 1, H, W]
    gt_text: Tuple[int, ...]
    family: str
    object_text: str

    def __post_init__(self):
        if self.gt_mask.shape[2:] != self.image.shape[2:]:
            raise ValidationError("Ground-truth mask is not aligned with the image")
        if not self.query.seg_positions:
            raise ValidationError("Response must contain a <seg> token")


def resolve_ratios(ratios: Optional[Dict[str, float]] = None) -> np.ndarray:
    merged = dict(DEFAULT_RATIOS)
    if ratios:
        unknown = set(ratios) - set(FAMILIES)
        if unknown:
            raise ValidationError(f"Unknown query families: {sorted(unknown)}")
        merged = {family: float(ratios.get(family, 0.0)) for family in FAMILIES}
    weights = np.array([merged[f] for f in FAMILIES], dtype=np.float64)
    if (weights < 0).any() or weights.sum() <= 0:
        raise ValidationError("Family ratios must be nonnegative with a positive sum")
    return weights / weights.sum()


def family_for(seed: int, idx: int, ratios: Optional[Dict[str, float]] = None) -> str:
    rng = np.random.default_rng([seed, idx, 0])
    return str(rng.choice(FAMILIES, p=resolve_ratios(ratios)))


def _random_shape(rng: np.random.Generator, size: int, taken, kind=None, color=None, side=None,
                  x_range=None) -> Optional[Shape]:
    side = side or int(rng.integers(size // 8, size // 3))
    box = place_box(rng, size, side, taken, x_range=x_range)
    if box is None:
        return None
    return Shape(
        kind=kind or KINDS[int(rng.integers(len(KINDS)))],
        color=color or list(COLORS)[int(rng.integers(len(COLORS)))],
        box=box,
    )


def _place_all(rng, size, specs) -> Optional[List[Shape]]:
    shapes: List[Shape] = []
    for spec in specs:
        shape = _random_shape(rng, size, [s.box for s in shapes], **spec)
        if shape is None:
            return None
        shapes.append(shape)
    return shapes


def _attribute_scene(rng, size):
    shapes = _place_all(rng, size, [{} for _ in range(int(rng.integers(2, 7)))])
    if shapes is None:
        return None
    combos = [(s.color, s.kind) for s in shapes]
    unique = [i for i, combo in enumerate(combos) if combos.count(combo) == 1]
    if not unique:
        return None
    target = unique[int(rng.integers(len(unique)))]
    return shapes, [target], f"{shapes[target].color} {shapes[target].kind}"


def _superlative_scene(rng, size):
    kind = KINDS[int(rng.integers(len(KINDS)))]
    count = int(rng.integers(2, 4))
    sides = sorted(rng.choice(np.arange(size // 8, size // 3 + 1), size=count, replace=False).tolist())
    if any(b - a < SIZE_MARGIN for a, b in zip(sides, sides[1:])):
        return None
    others = [k for k in KINDS if k != kind]
    specs = [{"kind": kind, "side": int(side)} for side in sides]
    specs += [{"kind": others[int(rng.integers(len(others)))]} for _ in range(int(rng.integers(0, 4)))]
    shapes = _place_all(rng, size, specs)
    if shapes is None:
        return None
    word = "largest" if rng.random() < 0.5 else "smallest"
    target = count - 1 if word == "largest" else 0
    return shapes, [target], f"{word} {kind}"


def _spatial_scene(rng, size):
    shapes = _place_all(rng, size, [{} for _ in range(int(rng.integers(2, 5)))])
    if shapes is None:
        return None
    direction = DIRECTIONS[int(rng.integers(len(DIRECTIONS)))]
    axis = 0 if direction in ("left", "right") else 1
    sign = 1.0 if direction in ("left", "top") else -1.0
    order = sorted(range(len(shapes)), key=lambda i: sign * shapes[i].center[axis])
    first, second = shapes[order[0]].center[axis], shapes[order[1]].center[axis]
    if abs(first - second) < POSITION_MARGIN:
        return None
    return shapes, [order[0]], f"shape on the {direction}"


def _count_position_scene(rng, size):
    count = 3 if rng.random() < 0.5 else 5
    slot = size // count
    specs = []
    smallest = max(4, slot // 2)
    for k in range(count):
        side = int(rng.integers(smallest, slot - 2)) if slot - 2 > smallest else smallest
        specs.append({"side": side, "x_range": (k * slot + 1, (k + 1) * slot - side - 1)})
    shapes = _place_all(rng, size, specs)
    if shapes is None:
        return None
    return shapes, [count // 2], "middle shape"


def _background_scene(rng, size):
    shapes = _place_all(rng, size, [{} for _ in range(int(rng.integers(2, 7)))])
    if shapes is None:
        return None
    return shapes, [], "background"


SCENE_BUILDERS = {
    "attribute": _attribute_scene,
    "superlative": _superlative_scene,
    "spatial": _spatial_scene,
    "count-position": _count_position_scene,
    "background": _background_scene,
}


@dataclass(frozen=True, eq=False)
class SceneLayout:
    family: str
    shapes: Tuple[Shape, ...]
    targets: Tuple[int, ...]
    object_text: str
    background: Image.Image


def compose_scene(seed: int, idx: int, image_size: int = 64,
                  ratios: Optional[Dict[str, float]] = None) -> SceneLayout:
    """Shapes, referenced targets and background for sample ``idx``"""
    family = family_for(seed, idx, ratios)
    rng = np.random.default_rng([seed, idx, 1])
    for _ in range(MAX_ATTEMPTS):
        built = SCENE_BUILDERS[family](rng, image_size)
        if built is not None:
            break
    else:
        raise ValidationError(f"Could not lay out a '{family}' scene at {image_size}px")
    shapes, targets, object_text = built
    return SceneLayout(family, tuple(shapes), tuple(targets), object_text, textured_background(rng, image_size))


def render_sample(seed: int, idx: int, image_size: int = 64, ratios: Optional[Dict[str, float]] = None,
                  vocab: Optional[Vocabulary] = None) -> SegSample:
    """Sample ``idx`` of the corpus; depends only on ``(seed, idx, image_size, ratios)``"""
    vocab = vocab or default_vocabulary()
    layout = compose_scene(seed, idx, image_size, ratios)
    family, shapes, targets, object_text = layout.family, layout.shapes, layout.targets, layout.object_text
    image, masks = render_scene(shapes, layout.background)
    if targets:
        mask = pil_to_mask(shape_mask(shapes[targets[0]], image_size))
    else:
        covered = torch.zeros(1, 1, image_size, image_size)
        for shape_mask_image in masks:
            covered = torch.maximum(covered, pil_to_mask(shape_mask_image))
        mask = 1.0 - covered
    query = build_query(object_text, vocab)
    return SegSample(pil_to_tensor(image), query, mask, query.response_ids, family, object_text)


def generate_synthetic_corpus(seed: int, n: int, image_size: int = 64,
                              ratios: Optional[Dict[str, float]] = None,
                              vocab: Optional[Vocabulary] = None) -> List[SegSample]:
    if n < 1:
        raise ValidationError("Corpus size must be >= 1")
    vocab = vocab or default_vocabulary()
    return [render_sample(seed, idx, image_size, ratios, vocab) for idx in range(n)]


def save_corpus(samples: Sequence[SegSample], directory: Path, vocab: Optional[Vocabulary] = None) -> Path:
    """Write ``NNNNN.png``, ``NNNNN_mask.png`` and a ``NNNNN.json`` sidecar per sample"""
    vocab = vocab or default_vocabulary()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for idx, sample in enumerate(samples):
        save_image(sample.image, directory / f"{idx:05d}.png")
        save_mask(sample.gt_mask, directory / f"{idx:05d}_mask.png")
        sidecar = {
            "query": sample.query.raw_text,
            "gt_text": vocab.decode(sample.gt_text),
            "family": sample.family,
        }
        (directory / f"{idx:05d}.json").write_text(json.dumps(sidecar, indent=2))
    logger.info("Saved %d segmentation samples to %s", len(samples), directory)
    return directory


def load_corpus(directory: Path, vocab: Optional[Vocabulary] = None) -> List[SegSample]:
    vocab = vocab or default_vocabulary()
    directory = Path(directory)
    sidecars = sorted(directory.glob("[0-9][0-9][0-9][0-9][0-9].json"))
    if not sidecars:
        raise ValidationError(f"No corpus samples found in {directory}")
    samples = []
    for sidecar_path in sidecars:
        stem = sidecar_path.stem
        sidecar = json.loads(sidecar_path.read_text())
        object_text = query_object(sidecar["query"])
        query = build_query(object_text, vocab)
        if sidecar.get("gt_text", RESPONSE_TEMPLATE) != vocab.decode(query.response_ids):
            raise ValidationError(f"{sidecar_path}: unexpected response text")
        samples.append(SegSample(
            image=load_image(directory / f"{stem}.png"),
            query=query,
            gt_mask=load_mask(directory / f"{stem}_mask.png"),
            gt_text=query.response_ids,
            family=sidecar["family"],
            object_text=object_text,
        ))
    return samples


def collate(samples: Sequence[SegSample], pad_id: int) -> Dict[str, torch.Tensor]:
    """Stack images and masks; right-pad token ids to the longest query"""
    lengths = [len(s.query.input_ids()) for s in samples]
    longest = max(lengths)
    input_ids = torch.full((len(samples), longest), pad_id, dtype=torch.long)
    for row, sample in enumerate(samples):
        ids = sample.query.input_ids()
        input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
    return {
        "images": torch.cat([s.image for s in samples]),
        "masks": torch.cat([s.gt_mask for s in samples]),
        "input_ids": input_ids,
        "lengths": torch.tensor(lengths),
    }
