"""
Run evaluation: per-record metric reports, scenario aggregates, rendered table
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch
from jinja2 import Environment, FileSystemLoader, StrictUndefined
from pydantic import BaseModel

from exceptions import ValidationError
from tools import load_image, load_mask
from .benchmark import REASONING_TAGS, SCENARIO_TAGS, BenchmarkRecord
from .extractors import FeatureExtractor, RandomConvPyramid
from .metrics import JointEmbedder, background_only, clip_sim, lpips_proxy, mean_or_none, mse, psnr, ssim

logger = logging.getLogger(__name__)

TEMPLATES = Path(__file__).parent / "templates"
GROUPS = ("Understanding", "Reasoning")
TABLE_METRICS = (
    ("psnr_db", "PSNR"),
    ("lpips_x1e3", "LPIPSx10^3"),
    ("ssim", "SSIM"),
    ("clip_sim_x100", "CLIPSim"),
    ("ins_align", "Ins-align"),
)
AGGREGATE_KEYS = ("psnr_db", "ssim", "mse_x1e3", "lpips_x1e3", "clip_sim_x100", "ins_align")


class MetricReport(BaseModel):
    psnr_db: float
    ssim: float
    mse: float
    lpips_proxy: float
    clip_sim: Optional[float] = None
    ins_align: Optional[float] = None
    region: str = "background"

    def scaled(self) -> Dict[str, Optional[float]]:
        """Values in the benchmark table's units"""
        return {
            "psnr_db": self.psnr_db,
            "ssim": self.ssim,
            "mse_x1e3": self.mse * 1e3,
            "lpips_x1e3": self.lpips_proxy * 1e3,
            "clip_sim_x100": None if self.clip_sim is None else self.clip_sim * 100.0,
            "ins_align": self.ins_align,
        }


def score_image(source: torch.Tensor, edited: torch.Tensor, mask: torch.Tensor, background: bool = True,
                extractor: Optional[FeatureExtractor] = None, embedder: Optional[JointEmbedder] = None,
                text: str = "", ins_align: Optional[float] = None) -> MetricReport:
    if source.shape != edited.shape:
        raise ValidationError(f"Edited image {tuple(edited.shape)} does not match source {tuple(source.shape)}")
    extractor = extractor or RandomConvPyramid()
    region = "background" if background and (mask < 0.5).any() else "full"
    if region == "background":
        keep = 1.0 - mask
        a, b = background_only(source, edited, mask)
        report = MetricReport(
            psnr_db=psnr(source, edited, keep),
            ssim=ssim(a, b, region_mask=keep),
            mse=mse(source, edited, keep),
            lpips_proxy=lpips_proxy(a, b, extractor, region_mask=keep),
            region=region,
        )
    else:
        report = MetricReport(
            psnr_db=psnr(source, edited),
            ssim=ssim(source, edited),
            mse=mse(source, edited),
            lpips_proxy=lpips_proxy(source, edited, extractor),
            region=region,
        )
    return report.copy(update={"clip_sim": clip_sim(edited, text, embedder), "ins_align": ins_align})


def aggregate(reports: Sequence[MetricReport]) -> Dict[str, Optional[float]]:
    scaled = [r.scaled() for r in reports]
    result: Dict[str, Optional[float]] = {"count": len(reports)}
    for key in AGGREGATE_KEYS:
        result[key] = mean_or_none([s[key] for s in scaled])
    return result


def evaluate_run(
    records: Sequence[BenchmarkRecord],
    edited_images: Sequence[Union[torch.Tensor, str, Path]],
    reports_out: Optional[Union[str, Path]] = None,
    background: bool = True,
    extractor: Optional[FeatureExtractor] = None,
    embedder: Optional[JointEmbedder] = None,
    ins_align: Optional[Sequence[Optional[float]]] = None,
    method: str = "Ours",
) -> dict:
    """Score one edited image per record; aggregate per scenario, per group and overall"""
    if len(records) != len(edited_images):
        raise ValidationError(f"{len(edited_images)} edited images for {len(records)} records")
    if ins_align is not None and len(ins_align) != len(records):
        raise ValidationError("ins_align needs one value per record")
    extractor = extractor or RandomConvPyramid()
    per_record: List[MetricReport] = []
    for index, (record, edited) in enumerate(zip(records, edited_images)):
        source = load_image(record.source_image)
        mask = load_mask(record.editing_mask)
        edited = load_image(edited) if isinstance(edited, (str, Path)) else edited
        per_record.append(score_image(
            source, edited, mask, background, extractor, embedder,
            text=record.instruction, ins_align=None if ins_align is None else ins_align[index],
        ))

    per_scenario = {}
    for tag in SCENARIO_TAGS:
        chosen = [r for r, rec in zip(per_record, records) if rec.scenario_tag == tag]
        if chosen:
            per_scenario[tag] = aggregate(chosen)
    groups = {}
    for group in GROUPS:
        reasoning = group == "Reasoning"
        chosen = [r for r, rec in zip(per_record, records) if (rec.scenario_tag in REASONING_TAGS) == reasoning]
        groups[group.lower()] = aggregate(chosen) if chosen else None

    report = {
        "method": method,
        "region": "background" if background else "full",
        "per_record": [
            {"source_image": str(rec.source_image), "scenario_tag": rec.scenario_tag, **r.dict()}
            for rec, r in zip(records, per_record)
        ],
        "per_scenario": per_scenario,
        "groups": groups,
        "overall": aggregate(per_record),
    }
    if reports_out is not None:
        write_report(report, reports_out)
    return report


def table_row(report: dict) -> Tuple[str, Dict[str, Optional[dict]]]:
    return report["method"], {group.lower(): report["groups"].get(group.lower()) for group in GROUPS}


def _metric(value) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_table(rows: Sequence[Tuple[str, Dict[str, Optional[dict]]]]) -> str:
    """Method column, then PSNR / LPIPSx10^3 / SSIM / CLIPSim / Ins-align per scenario group"""
    columns = ["Method"] + [f"{group} {label}" for group in GROUPS for _, label in TABLE_METRICS]
    cells = []
    for method, groups in rows:
        row = [method]
        for group in GROUPS:
            values = groups.get(group.lower()) or {}
            row.extend(_metric(values.get(key)) for key, _ in TABLE_METRICS)
        cells.append(row)
    environment = Environment(
        loader=FileSystemLoader(str(TEMPLATES)),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        undefined=StrictUndefined,
    )
    return environment.get_template("table.txt.j2").render(columns=columns, rows=cells)


def write_report(report: dict, out_dir: Union[str, Path], rows=None) -> Path:
    """Write ``report.json`` and ``table.txt`` into ``out_dir``"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str))
    (out_dir / "table.txt").write_text(render_table(rows or [table_row(report)]))
    logger.info("Wrote evaluation report to %s", out_dir)
    return out_dir
