"""
Benchmark manifest: JSON lines of (source image, instruction, editing mask, scenario tag)
"""

import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Union

from jsonschema import Draft7Validator
from PIL import Image
from pydantic import BaseModel

from exceptions import BenchmarkValidationError

logger = logging.getLogger(__name__)

UNDERSTANDING_TAGS = ("left-right", "relative size", "mirror", "color", "multiple objects", "addition")
REASONING_TAGS = ("reasoning",)
SCENARIO_TAGS = UNDERSTANDING_TAGS + REASONING_TAGS

RECORD_SCHEMA = {
    "type": "object",
    "properties": {
        "source_image": {"type": "string", "minLength": 1},
        "instruction": {"type": "string", "minLength": 1},
        "editing_mask": {"type": "string", "minLength": 1},
        "scenario_tag": {"type": "string", "enum": list(SCENARIO_TAGS)},
        "target_image": {"type": "string", "minLength": 1},
    },
    "required": ["source_image", "instruction", "editing_mask", "scenario_tag"],
}

_validator = Draft7Validator(RECORD_SCHEMA)


class BenchmarkRecord(BaseModel):
    source_image: Path
    instruction: str
    editing_mask: Path
    scenario_tag: str
    target_image: Optional[Path] = None

    @property
    def group(self) -> str:
        return "reasoning" if self.scenario_tag in REASONING_TAGS else "understanding"

    def to_manifest(self, root: Path) -> dict:
        data = {
            "source_image": _relative(self.source_image, root),
            "instruction": self.instruction,
            "editing_mask": _relative(self.editing_mask, root),
            "scenario_tag": self.scenario_tag,
        }
        if self.target_image is not None:
            data["target_image"] = _relative(self.target_image, root)
        return data


def _relative(path: Path, root: Path) -> str:
    try:
        return str(Path(path).resolve().relative_to(Path(root).resolve()))
    except ValueError:
        return str(path)


def _image_size(path: Path):
    with Image.open(path) as image:
        return image.size


def load_benchmark(manifest_path: Union[str, Path]) -> List[BenchmarkRecord]:
    """Parse and validate a manifest; paths resolve against the manifest's directory"""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise BenchmarkValidationError([f"{manifest_path}: manifest not found"])
    root = manifest_path.parent
    records, errors = [], []
    for number, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as error:
            errors.append(f"line {number}: invalid JSON ({error.msg})")
            continue
        problems = sorted(_validator.iter_errors(data), key=lambda e: list(e.path))
        if problems:
            errors.extend(f"line {number}: {problem.message}" for problem in problems)
            continue
        source = root / data["source_image"]
        mask = root / data["editing_mask"]
        target = root / data["target_image"] if "target_image" in data else None
        missing = [str(p) for p in (source, mask, target) if p is not None and not p.exists()]
        if missing:
            errors.append(f"line {number}: missing file(s) {', '.join(missing)}")
            continue
        source_size, mask_size = _image_size(source), _image_size(mask)
        if source_size != mask_size:
            errors.append(f"line {number}: mask size {mask_size} does not match image size {source_size}")
            continue
        records.append(BenchmarkRecord(
            source_image=source,
            instruction=data["instruction"],
            editing_mask=mask,
            scenario_tag=data["scenario_tag"],
            target_image=target,
        ))
    if errors:
        raise BenchmarkValidationError(errors)
    logger.info("Loaded %d benchmark records from %s", len(records), manifest_path)
    return records


def write_manifest(records: Iterable[BenchmarkRecord], manifest_path: Union[str, Path]) -> Path:
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(record.to_manifest(manifest_path.parent)) for record in records]
    manifest_path.write_text("\n".join(lines) + "\n")
    return manifest_path
