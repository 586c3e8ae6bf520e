"""
Editing pipeline: orchestration, run artifacts, ablation and synthetic benchmark
"""

from .ablation import VARIANTS, ablation_trends, run_ablation
from .editor import ImageEditor, RunArtifact, replay_run
from .synthetic import FAMILY_TAGS, build_synthetic_benchmark

__all__ = [
    "FAMILY_TAGS",
    "ImageEditor",
    "RunArtifact",
    "VARIANTS",
    "ablation_trends",
    "build_synthetic_benchmark",
    "replay_run",
    "run_ablation",
]
