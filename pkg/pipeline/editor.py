"""
Three-stage editing pipeline: instruction decomposition, region mask, inpainting
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import torch

from config import PipelineConfig, load_config, seeded_checkpoint
from database.crud import RunCRUD
from database.database import init_database
from exceptions import InstructionError, ModelNotReadyError, StageError, ValidationError
from inpaint.vae import InpaintModel, generate_fill, load_checkpoint
from promptist import EditCategory, EditPlan, compute_addition_region, mllm_analyze, parse_instruction, refine_prompt
from segmentation.model import ReasonSegModel, load_reason_seg, predict_mask
from segmentation.tokenizer import build_query
from tools import (
    blend,
    dilate_mask,
    load_image,
    rasterize_bbox,
    resize_image,
    resize_mask,
    save_image,
    save_mask,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class RunArtifact:
    """Everything one ``edit`` call produced, mirrored on disk under ``run_dir``"""

    run_dir: Path
    instruction: str
    image_path: str
    plan: Optional[EditPlan] = None
    prompt: Optional[str] = None
    mask_source: Optional[str] = None
    mask: Optional[torch.Tensor] = None
    dilated_mask: Optional[torch.Tensor] = None
    inpainted: Optional[torch.Tensor] = None
    final: Optional[torch.Tensor] = None
    timings: Dict[str, float] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)
    status: str = "pending"
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    run_id: Optional[int] = None

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())

    def record(self) -> dict:
        return {
            "status": self.status,
            "instruction": self.instruction,
            "image_path": self.image_path,
            "category": self.plan.category.value if self.plan else None,
            "mask_source": self.mask_source,
            "skipped_stages": self.skipped,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "run_id": self.run_id,
            "files": sorted(p.name for p in self.run_dir.iterdir()) if self.run_dir.exists() else [],
        }


def _write_json(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path


class ImageEditor:
    """
    Runs edits against one configuration, keeping loaded models across calls.

    Models passed in directly take precedence over checkpoints named in the
    config; missing ones are loaded on first use.
    """

    def __init__(self, config: Optional[PipelineConfig] = None, reason_seg: Optional[ReasonSegModel] = None,
                 inpainter: Optional[InpaintModel] = None):
        self.config = config or load_config()
        self._reason_seg = reason_seg
        self._inpainter = inpainter
        self._sessions = None
        if inpainter is not None:
            self._apply_tau(inpainter)

    @property
    def reason_seg(self) -> ReasonSegModel:
        if self._reason_seg is None:
            if not self.config.reason_seg_checkpoint:
                raise ModelNotReadyError("No reasoning-segmentation checkpoint configured")
            path = seeded_checkpoint(self.config.reason_seg_checkpoint, self.config.seed)
            self._reason_seg = load_reason_seg(path)
        return self._reason_seg

    @property
    def inpainter(self) -> InpaintModel:
        if self._inpainter is None:
            if not self.config.inpaint_checkpoint:
                raise ModelNotReadyError("No inpainting checkpoint configured")
            path = seeded_checkpoint(self.config.inpaint_checkpoint, self.config.seed)
            self._inpainter = self._apply_tau(load_checkpoint(path))
        return self._inpainter

    def _apply_tau(self, model: InpaintModel) -> InpaintModel:
        if self.config.tau is not None:
            for module in model.hypergraph_modules():
                module.tau = self.config.tau
        return model

    def analyze(self, image_path: PathLike, instruction: str, image_size: Tuple[int, int]) -> EditPlan:
        if self.config.promptist_mode == "external":
            return mllm_analyze(self.config.promptist, Path(image_path).read_bytes(), instruction)
        return parse_instruction(instruction, image_size)

    def region_mask(self, image: torch.Tensor, plan: EditPlan) -> Tuple[torch.Tensor, str]:
        """Binary ``[1, 1, H, W]`` edit region for ``plan`` and where it came from"""
        height, width = image.shape[2:]
        if plan.category == EditCategory.GLOBAL:
            return torch.ones(1, 1, height, width), "all"
        if plan.category == EditCategory.ADDITION:
            region = plan.region_hint or compute_addition_region(plan, width, height)
            return rasterize_bbox(region, height, width), "region_hint"
        target = "background" if plan.category == EditCategory.BACKGROUND else plan.editing_object
        return self.segment(image, target), "reason_seg"

    def segment(self, image: torch.Tensor, editing_object: str) -> torch.Tensor:
        model = self.reason_seg
        size = model.config.image_size
        query = build_query(editing_object, model.vocab)
        prediction = predict_mask(model, resize_image(image, (size, size)), query)
        # Union over every <seg> mask in the response.
        mask = prediction.binary().amax(dim=0)[None, None]
        return resize_mask(mask, tuple(image.shape[2:]))

    def fill(self, image: torch.Tensor, mask: torch.Tensor, generator: Optional[torch.Generator] = None) -> torch.Tensor:
        """Raw inpainter output at the source resolution"""
        model = self.inpainter
        size = model.config.image_size
        generated = generate_fill(model, resize_image(image, (size, size)), resize_mask(mask, (size, size)),
                                 self.config.samples, generator)
        return resize_image(generated.to(image.dtype), tuple(image.shape[2:]))

    def composite(self, image: torch.Tensor, generated: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if not self.config.blend:
            return generated
        return blend(image, generated, mask, self.config.blend_radius)

    @contextmanager
    def _timed(self, artifact: RunArtifact, stage: str):
        start = time.perf_counter()
        try:
            yield
        except Exception:
            artifact.failed_stage = stage
            raise
        finally:
            artifact.timings[stage] = time.perf_counter() - start

    def _start_record(self, artifact: RunArtifact) -> None:
        if not self.config.database_url:
            return
        if self._sessions is None:
            self._sessions = init_database(self.config.database_url)
        with self._sessions() as db:
            run = RunCRUD.create_run(db, artifact.instruction, artifact.image_path, str(artifact.run_dir))
            RunCRUD.update_run_status(db, run.id, "processing")
            artifact.run_id = run.id

    def _finish_record(self, artifact: RunArtifact) -> None:
        if self._sessions is None or artifact.run_id is None:
            return
        with self._sessions() as db:
            RunCRUD.update_run_status(
                db,
                artifact.run_id,
                artifact.status,
                category=artifact.plan.category.value if artifact.plan else None,
                stage_timings=dict(artifact.timings),
                failed_stage=artifact.failed_stage,
                error_message=artifact.error,
            )

    def _persist(self, artifact: RunArtifact) -> None:
        run_dir = artifact.run_dir
        _write_json(run_dir / "timings.json", {"stages": artifact.timings, "total": artifact.total_time})
        _write_json(run_dir / "config.json", self.config.snapshot())
        _write_json(run_dir / "run.json", artifact.record())

    def edit(self, image_path: PathLike, instruction: str, out_dir: Optional[PathLike] = None,
             run_name: Optional[str] = None) -> RunArtifact:
        """Run every stage for one image and instruction; artifacts go to ``out_dir/run_name``"""
        if instruction is None or not instruction.strip():
            raise InstructionError("Instruction must not be empty")
        image_path = Path(image_path)
        if not image_path.exists():
            raise ValidationError(f"Image not found: {image_path}")
        source = load_image(image_path)
        height, width = source.shape[2:]

        run_name = run_name or datetime.now().strftime("run-%Y%m%d-%H%M%S-%f")
        run_dir = Path(out_dir or self.config.output_dir) / run_name
        run_dir.mkdir(parents=True, exist_ok=True)
        artifact = RunArtifact(run_dir=run_dir, instruction=instruction, image_path=str(image_path))
        _write_json(run_dir / "request.json", {
            "image_path": str(image_path),
            "instruction": instruction,
            "run_name": run_name,
        })
        save_image(source, run_dir / "source.png")
        self._start_record(artifact)
        generator = torch.Generator().manual_seed(self.config.seed)
        artifact.status = "processing"

        try:
            with self._timed(artifact, "promptist"):
                artifact.plan = self.analyze(image_path, instruction, (width, height))
                artifact.prompt = refine_prompt(artifact.plan)
            _write_json(run_dir / "plan.json", {**artifact.plan.to_wire(), "refined_prompt": artifact.prompt})
            logger.info("Instruction '%s' -> %s", instruction, artifact.plan.category.value)

            with self._timed(artifact, "reason_seg"):
                artifact.mask, artifact.mask_source = self.region_mask(source, artifact.plan)
            if artifact.mask_source != "reason_seg":
                artifact.skipped.append("reason_seg")
                logger.info("Reasoning segmentation skipped for %s edit", artifact.plan.category.value)
            save_mask(artifact.mask, run_dir / "mask.png")

            with self._timed(artifact, "dilate"):
                artifact.dilated_mask = dilate_mask(artifact.mask, self.config.dilation_radius)
            save_mask(artifact.dilated_mask, run_dir / "mask_dilated.png")

            with self._timed(artifact, "inpaint"):
                artifact.inpainted = self.fill(source, artifact.dilated_mask, generator)
            save_image(artifact.inpainted, run_dir / "inpainted.png")

            with self._timed(artifact, "blend"):
                artifact.final = self.composite(source, artifact.inpainted, artifact.dilated_mask)
            save_image(artifact.final, run_dir / "final.png")
            artifact.status = "completed"
        except Exception as error:
            artifact.status = "failed"
            artifact.failed_stage = artifact.failed_stage or "io"
            artifact.error = str(error)
            logger.error("Run %s failed in stage '%s': %s", run_name, artifact.failed_stage, error)
            raise StageError(artifact.failed_stage, str(error), artifact) from error
        finally:
            self._persist(artifact)
            self._finish_record(artifact)

        logger.info("Run %s completed in %.3fs", run_name, artifact.total_time)
        return artifact


def replay_run(run_dir: PathLike, out_dir: PathLike, editor: Optional[ImageEditor] = None) -> RunArtifact:
    """Re-execute a run from its ``request.json``, ``source.png`` and ``config.json``"""
    run_dir = Path(run_dir)
    for name in ("request.json", "source.png", "config.json"):
        if not (run_dir / name).exists():
            raise ValidationError(f"{run_dir} is not a run directory: {name} missing")
    request = json.loads((run_dir / "request.json").read_text())
    editor = editor or ImageEditor(load_config(run_dir / "config.json"))
    return editor.edit(run_dir / "source.png", request["instruction"], out_dir, run_name=run_dir.name)
