"""
Ablation over the mask source and the hypergraph blocks of the inpainter

``baseline``  box hull of the segmentation mask, inpainter without hypergraph
``+reseg``    exact segmentation mask, inpainter without hypergraph
``+hypconv``  exact segmentation mask, inpainter with hypergraph

Checkpoint paths may contain ``{seed}``; each seed then loads its own models.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import torch

from config import PipelineConfig, seeded_checkpoint
from evaluation.benchmark import load_benchmark
from evaluation.report import evaluate_run, render_table, table_row
from exceptions import EditorError
from inpaint.vae import InpaintModel, load_checkpoint, masked_region_mse
from promptist import parse_instruction
from segmentation.metrics import giou
from segmentation.model import ReasonSegModel, load_reason_seg
from tools import dilate_mask, load_image, load_mask, mask_bbox
from .editor import ImageEditor

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "+reseg", "+hypconv")
BOX_MASK_VARIANTS = ("baseline",)
HYPERGRAPH_VARIANTS = ("+hypconv",)

# name -> (variant, reference variant, metric, whether higher is better)
TRENDS = {
    "reseg_mask_giou": ("+reseg", "baseline", "mask_giou", True),
    "hypconv_masked_region_mse": ("+hypconv", "+reseg", "masked_region_mse", False),
}


def _load_or_none(loader, path: Optional[str], what: str):
    if not path:
        logger.warning("No %s checkpoint configured", what)
        return None
    try:
        return loader(path)
    except EditorError as error:
        logger.warning("Cannot load %s checkpoint: %s", what, error)
        return None


def run_ablation(
    manifest: Union[str, Path],
    config: PipelineConfig,
    variants: Sequence[str] = VARIANTS,
    out_dir: Optional[Union[str, Path]] = None,
    reason_seg: Optional[ReasonSegModel] = None,
    inpainters: Optional[Dict[str, InpaintModel]] = None,
    seeds: Optional[Sequence[int]] = None,
) -> Dict[str, dict]:
    """
    Edit every benchmark record with each variant and score the results.

    ``inpainters`` maps ``"baseline"`` (no hypergraph) and ``"hypconv"`` to
    models; missing entries are loaded from ``baseline_inpaint_checkpoint``
    and ``inpaint_checkpoint``. Variants whose models are unavailable are
    skipped with a warning.

    Each seed in ``seeds`` (default: ``config.seed``) is a separate run.
    Returns the first seed's evaluation report per variant, with
    ``per_seed`` summaries of every seed attached.
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise EditorError(f"Unknown ablation variants {unknown}; choose from {VARIANTS}")
    seeds = list(seeds) if seeds else [config.seed]
    if len(set(seeds)) != len(seeds):
        raise EditorError(f"Duplicate ablation seeds: {seeds}")
    records = load_benchmark(manifest)

    per_seed: Dict[int, Dict[str, dict]] = {}
    for seed in seeds:
        seed_config = config.copy(update={"seed": seed})
        reports = _run_seed(records, seed_config, variants, reason_seg, dict(inpainters or {}))
        if reports:
            per_seed[seed] = reports
    if not per_seed:
        return {}

    first = per_seed[seeds[0]] if seeds[0] in per_seed else next(iter(per_seed.values()))
    summary: Dict[str, dict] = {}
    for variant in VARIANTS:
        if variant not in first:
            continue
        summary[variant] = dict(first[variant])
        summary[variant]["per_seed"] = {
            str(seed): _seed_summary(reports[variant]) for seed, reports in per_seed.items() if variant in reports
        }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {"variants": summary, "trends": ablation_trends(summary)}
        (out_dir / "ablation.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
        (out_dir / "table.txt").write_text(render_table([table_row(r) for r in summary.values()]))
    return summary


def _run_seed(records, config: PipelineConfig, variants: Sequence[str], reason_seg: Optional[ReasonSegModel],
              inpainters: Dict[str, InpaintModel]) -> Dict[str, dict]:
    seed = config.seed
    reason_seg = reason_seg or _load_or_none(
        load_reason_seg, seeded_checkpoint(config.reason_seg_checkpoint, seed), "reasoning-segmentation"
    )
    if reason_seg is None:
        logger.warning("Skipping every ablation variant for seed %d: no segmentation model", seed)
        return {}

    reports: Dict[str, dict] = {}
    for variant in VARIANTS:
        if variant not in variants:
            continue
        key = "hypconv" if variant in HYPERGRAPH_VARIANTS else "baseline"
        if key not in inpainters:
            path = config.inpaint_checkpoint if key == "hypconv" else config.baseline_inpaint_checkpoint
            inpainters[key] = _load_or_none(load_checkpoint, seeded_checkpoint(path, seed), f"{key} inpainting")
        if inpainters[key] is None:
            logger.warning("Skipping ablation variant %s for seed %d: no %s inpainter", variant, seed, key)
            continue
        editor = ImageEditor(config, reason_seg=reason_seg, inpainter=inpainters[key])
        reports[variant] = _evaluate_variant(editor, records, variant)
        logger.info("Ablation variant %s, seed %d: %s", variant, seed, reports[variant]["overall"])
    return reports


def _seed_summary(report: dict) -> dict:
    return {
        "mask_giou": report["mask_giou"],
        "masked_region_mse": report["masked_region_mse"],
        "overall": report["overall"],
    }


def ablation_trends(reports: Mapping[str, dict]) -> Dict[str, dict]:
    """
    Per-seed direction of each expected trend and whether a majority holds.

    ``reports`` is the result of ``run_ablation``. Ties count as holding.
    Seeds missing either variant or the metric are left out; ``majority``
    is None when no seed could be compared.
    """
    trends: Dict[str, dict] = {}
    for name, (variant, reference, metric, higher) in TRENDS.items():
        holds: Dict[str, bool] = {}
        seeds = reports[variant]["per_seed"] if variant in reports and reference in reports else {}
        for seed, entry in seeds.items():
            other = reports[reference]["per_seed"].get(seed)
            if other is None:
                continue
            value, baseline = entry.get(metric), other.get(metric)
            if value is None or baseline is None:
                continue
            holds[str(seed)] = value >= baseline if higher else value <= baseline
        wins = sum(holds.values())
        trends[name] = {
            "variant": variant,
            "reference": reference,
            "metric": metric,
            "per_seed": holds,
            "wins": wins,
            "majority": 2 * wins > len(holds) if holds else None,
        }
    return trends


def _evaluate_variant(editor: ImageEditor, records, variant: str) -> dict:
    finals, predicted, truths, region_errors = [], [], [], []
    for record in records:
        source = load_image(record.source_image)
        height, width = source.shape[2:]
        plan = parse_instruction(record.instruction, (width, height))
        mask, _ = editor.region_mask(source, plan)
        if variant in BOX_MASK_VARIANTS:
            mask = mask_bbox(mask)
        dilated = dilate_mask(mask, editor.config.dilation_radius)
        generator = torch.Generator().manual_seed(editor.config.seed)
        final = editor.composite(source, editor.fill(source, dilated, generator), dilated)
        finals.append(final)

        truth = load_mask(record.editing_mask)
        predicted.append(mask[0, 0])
        truths.append(truth[0, 0])
        if record.target_image is not None and truth.any():
            region_errors.append(masked_region_mse(final, load_image(record.target_image), truth))

    report = evaluate_run(records, finals, method=variant)
    report["mask_giou"] = giou(predicted, truths)
    report["masked_region_mse"] = sum(region_errors) / len(region_errors) if region_errors else None
    return report
