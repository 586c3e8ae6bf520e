"""
Training loop for the inpainting VAE
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch
from tqdm import tqdm

from exceptions import TrainingDivergedError, ValidationError
from tools import write_loss_log
from .data import SyntheticInpaintDataset
from .vae import InpaintConfig, InpaintModel, mean_color_fill, masked_region_mse, save_checkpoint, vae_inpaint_loss

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "recon_loss", "kl_loss", "total")


def split_dataset(config: InpaintConfig) -> Tuple[SyntheticInpaintDataset, SyntheticInpaintDataset]:
    """Training set and a held-out set drawn from a disjoint seed stream"""
    train = SyntheticInpaintDataset(config.num_images, config.image_size, seed=config.seed)
    held_out = SyntheticInpaintDataset(config.held_out, config.image_size, seed=config.seed + 1_000_003)
    return train, held_out


def train_inpainter(
    dataset: SyntheticInpaintDataset,
    config: Optional[InpaintConfig] = None,
    checkpoint_dir: Optional[Path] = None,
    log_path: Optional[Path] = None,
    progress: bool = False,
) -> Tuple[InpaintModel, List[Dict[str, float]]]:
    """
    Train an InpaintModel on ``dataset`` and return it with its loss curve.

    Two runs with the same config produce identical curves: parameters, batch
    order and reparameterisation noise all come from ``config.seed``.
    """
    config = config or InpaintConfig()
    if dataset.image_size != config.image_size:
        raise ValidationError(
            f"Dataset images are {dataset.image_size}px but the model expects {config.image_size}px"
        )
    torch.manual_seed(config.seed)
    model = InpaintModel(config)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)

    images, masks = dataset.tensors()
    history: List[Dict[str, float]] = []
    steps = range(1, config.steps + 1)
    for step in tqdm(steps, desc="train-inpaint", disable=not progress):
        index = torch.randint(len(images), (min(config.batch_size, len(images)),), generator=generator)
        image, mask = images[index], masks[index]
        try:
            reconstruction, dist = model(image, mask, sample=True, generator=generator)
        except ValidationError as error:
            raise TrainingDivergedError(step, {"forward": str(error)}) from error
        loss = vae_inpaint_loss(reconstruction, image, mask, dist, config.beta, config.inside_weight)
        record = {
            "step": step,
            "recon_loss": loss.reconstruction.item(),
            "kl_loss": loss.kl.item(),
            "total": loss.total.item(),
        }
        if not all(math.isfinite(record[k]) for k in LOG_COLUMNS[1:]):
            raise TrainingDivergedError(step, {k: record[k] for k in LOG_COLUMNS[1:]})

        optimizer.zero_grad()
        loss.total.backward()
        optimizer.step()

        history.append(record)
        logger.debug("step %d recon=%.5f kl=%.5f total=%.5f", step, record["recon_loss"],
                     record["kl_loss"], record["total"])
        if checkpoint_dir is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
            save_checkpoint(model, Path(checkpoint_dir) / f"inpaint_step{step:06d}.pt", step)

    model.trained = True
    model.eval()
    if checkpoint_dir is not None:
        save_checkpoint(model, Path(checkpoint_dir) / "inpaint.pt", config.steps)
    if log_path is not None:
        write_loss_log(history, log_path, LOG_COLUMNS)
    logger.info("Trained inpainter for %d steps, final loss %.5f", config.steps,
                history[-1]["total"] if history else float("nan"))
    return model, history


@torch.no_grad()
def evaluate_inpainter(model: InpaintModel, dataset: SyntheticInpaintDataset) -> Dict[str, float]:
    """Masked-region MSE of the raw decode and of the mean-colour baseline"""
    images, masks = dataset.tensors()
    model.eval()
    generated = model.generate(images, masks)
    return {
        "model_mse": masked_region_mse(generated, images, masks),
        "mean_fill_mse": masked_region_mse(mean_color_fill(images, masks), images, masks),
    }
