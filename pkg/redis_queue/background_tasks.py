"""
Background edit jobs executed by the rq worker
"""

import json
import logging
from pathlib import Path
from typing import Optional, Union

from config import PipelineConfig, load_config
from pipeline.editor import ImageEditor

logger = logging.getLogger(__name__)


def run_edit_job(image_path: str, instruction: str, config: Union[dict, str, None] = None,
                 out_dir: Optional[str] = None, run_name: Optional[str] = None) -> dict:
    """
    Background task to run one edit

    Args:
        image_path (str): Path to the source image
        instruction (str): Editing instruction
        config: Config snapshot dict, or path to a config file
        out_dir (str): Output directory (defaults to the config's)
        run_name (str): Run directory name

    Returns:
        The run record written to ``run.json``
    """
    if isinstance(config, dict):
        pipeline_config = PipelineConfig(**config)
    else:
        pipeline_config = load_config(config)
    try:
        artifact = ImageEditor(pipeline_config).edit(image_path, instruction, out_dir, run_name)
    except Exception as error:
        logger.error("❌ Edit job for %s failed: %s", image_path, error)
        raise
    logger.info("✅ Edit job finished: %s", artifact.run_dir)
    return json.loads((Path(artifact.run_dir) / "run.json").read_text())
