"""
Evaluation: image-quality metrics, benchmark manifests and reports
"""

from .benchmark import (
    REASONING_TAGS,
    SCENARIO_TAGS,
    UNDERSTANDING_TAGS,
    BenchmarkRecord,
    load_benchmark,
    write_manifest,
)
from .extractors import FeatureExtractor, RandomConvPyramid
from .metrics import PSNR_CAP_DB, clip_sim, lpips_proxy, mse, psnr, ssim
from .report import MetricReport, evaluate_run, render_table, score_image, table_row, write_report

__all__ = [
    "BenchmarkRecord",
    "FeatureExtractor",
    "MetricReport",
    "PSNR_CAP_DB",
    "REASONING_TAGS",
    "RandomConvPyramid",
    "SCENARIO_TAGS",
    "UNDERSTANDING_TAGS",
    "clip_sim",
    "evaluate_run",
    "load_benchmark",
    "lpips_proxy",
    "mse",
    "psnr",
    "render_table",
    "score_image",
    "ssim",
    "table_row",
    "write_manifest",
    "write_report",
]
