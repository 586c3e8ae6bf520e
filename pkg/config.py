"""
Pipeline configuration: TOML/YAML/JSON files, SMARTEDIT_* environment, CLI overrides
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseSettings, ValidationError as PydanticValidationError, validator

from exceptions import ConfigError
from inpaint.vae import InpaintConfig
from promptist.client import MLLMClientConfig
from segmentation.losses import LossWeights
from segmentation.model import ReasonSegConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

load_dotenv()

logger = logging.getLogger(__name__)

SECTIONS = {
    "promptist": "promptist",
    "inpaint": "inpaint",
    "reason_seg": "reason_seg",
    "losses": "losses",
}
PROMPTIST_MODES = ("rules", "external")
SEED_PLACEHOLDER = "{seed}"


class PipelineConfig(BaseSettings):
    reason_seg_checkpoint: Optional[str] = None
    inpaint_checkpoint: Optional[str] = None
    baseline_inpaint_checkpoint: Optional[str] = None
    promptist_mode: str = "rules"
    tau: Optional[float] = None
    dilation_radius: int = 3
    blend: bool = True
    blend_radius: int = 2
    samples: int = 1
    output_dir: str = "runs"
    seed: int = 0
    database_url: Optional[str] = None
    redis_url: str = "redis://localhost:6379"

    promptist: MLLMClientConfig = MLLMClientConfig()
    inpaint: InpaintConfig = InpaintConfig()
    reason_seg: ReasonSegConfig = ReasonSegConfig()
    losses: LossWeights = LossWeights()

    class Config:
        env_prefix = "SMARTEDIT_"

        @classmethod
        def customise_sources(cls, init_settings, env_settings, file_secret_settings):
            # Environment wins over file values passed as init kwargs.
            return env_settings, init_settings, file_secret_settings

    @validator("promptist_mode")
    def known_mode(cls, value):
        if value not in PROMPTIST_MODES:
            raise ValueError(f"promptist_mode must be one of {PROMPTIST_MODES}")
        return value

    @validator("reason_seg_checkpoint", "inpaint_checkpoint", "baseline_inpaint_checkpoint")
    def checkpoint_exists(cls, value):
        # Seeded paths are checked once the seed is substituted.
        if value and SEED_PLACEHOLDER not in value and not Path(value).exists():
            raise ValueError(f"checkpoint not found: {value}")
        return value

    @validator("tau")
    def positive_tau(cls, value):
        if value is not None and not value > 0:
            raise ValueError("tau must be positive")
        return value

    @validator("dilation_radius", "blend_radius")
    def nonnegative_radius(cls, value):
        if value < 0:
            raise ValueError("radius must be >= 0")
        return value

    @validator("samples")
    def positive_samples(cls, value):
        if value < 1:
            raise ValueError("samples must be >= 1")
        return value

    def snapshot(self) -> Dict[str, Any]:
        return json.loads(self.json())


def seeded_checkpoint(path: Optional[str], seed: int) -> Optional[str]:
    """``path`` with any ``{seed}`` placeholder replaced by ``seed``"""
    return path.replace(SEED_PLACEHOLDER, str(seed)) if path else path


def _read_file(path: Path) -> Dict[str, Any]:
    suffix = path.suffix.lower()
    if suffix == ".toml":
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    if suffix in (".yaml", ".yml"):
        return yaml.safe_load(path.read_text()) or {}
    if suffix == ".json":
        return json.loads(path.read_text())
    raise ConfigError(f"Unsupported config format '{suffix}' (use .toml, .yaml or .json)")


def _flatten_sections(data: Dict[str, Any]) -> Dict[str, Any]:
    """``[pipeline]`` keys become top-level fields; other sections stay nested"""
    values = dict(data.get("pipeline", {}))
    for key, value in data.items():
        if key == "pipeline":
            continue
        if key in SECTIONS:
            values[SECTIONS[key]] = value
        else:
            values[key] = value
    return values


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> PipelineConfig:
    """Build the config from an optional file, the environment, then ``overrides``"""
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            values = _flatten_sections(_read_file(path))
        except (tomllib.TOMLDecodeError, yaml.YAMLError, json.JSONDecodeError) as error:
            raise ConfigError(f"Cannot parse {path}: {error}") from error
    try:
        config = PipelineConfig(**values)
    except PydanticValidationError as error:
        raise ConfigError(f"Invalid configuration: {error}") from error
    unknown = set(overrides) - set(PipelineConfig.__fields__)
    if unknown:
        raise ConfigError(f"Unknown config overrides: {sorted(unknown)}")
    explicit = {k: v for k, v in overrides.items() if v is not None}
    if explicit:
        # Command-line values win over both the file and the environment.
        config = config.copy(update=explicit)
    logger.debug("Loaded config from %s", path or "defaults")
    return config
