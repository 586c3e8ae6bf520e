"""
Synthetic removal benchmark in the manifest format read by ``evaluation.load_benchmark``
"""

import logging
from pathlib import Path
from typing import Dict, Union

from evaluation.benchmark import BenchmarkRecord, write_manifest
from exceptions import ValidationError
from scenes import render_scene, shape_mask
from segmentation.corpus import compose_scene
from tools import pil_to_mask, pil_to_tensor, save_image, save_mask

logger = logging.getLogger(__name__)

FAMILY_TAGS: Dict[str, str] = {
    "spatial": "left-right",
    "superlative": "relative size",
    "attribute": "color",
    "count-position": "multiple objects",
}
BENCHMARK_RATIOS = {family: 1.0 for family in FAMILY_TAGS}


def build_synthetic_benchmark(out_dir: Union[str, Path], n: int = 20, seed: int = 0,
                              image_size: int = 64) -> Path:
    """
    Write ``n`` "Remove the <object>" records under ``out_dir``.

    Each record has the source scene, the referenced shape's mask as editing
    mask, and the same scene rendered without that shape as ``target_image``.
    Returns the manifest path.
    """
    if n < 1:
        raise ValidationError("Benchmark size must be >= 1")
    out_dir = Path(out_dir)
    records = []
    for idx in range(n):
        layout = compose_scene(seed, idx, image_size, BENCHMARK_RATIOS)
        target = layout.targets[0]
        source, _ = render_scene(layout.shapes, layout.background)
        kept = [shape for i, shape in enumerate(layout.shapes) if i != target]
        removed, _ = render_scene(kept, layout.background)

        name = f"{idx:05d}.png"
        records.append(BenchmarkRecord(
            source_image=save_image(pil_to_tensor(source), out_dir / "images" / name),
            instruction=f"Remove the {layout.object_text}",
            editing_mask=save_mask(pil_to_mask(shape_mask(layout.shapes[target], image_size)),
                                   out_dir / "masks" / name),
            scenario_tag=FAMILY_TAGS[layout.family],
            target_image=save_image(pil_to_tensor(removed), out_dir / "targets" / name),
        ))
    manifest = write_manifest(records, out_dir / "manifest.jsonl")
    logger.info("Wrote %d-record synthetic benchmark to %s", n, manifest)
    return manifest
