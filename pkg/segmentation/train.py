"""
End-to-end training of the reasoning-segmentation model
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from exceptions import TrainingDivergedError, ValidationError
from tools import write_loss_log
from .corpus import SegSample, collate
from .losses import IGNORE_INDEX, LossWeights, MaskPair, batch_mask_loss, text_loss, total_loss
from .metrics import ciou, giou
from .model import ReasonSegConfig, ReasonSegModel, predict_mask, save_reason_seg

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "text_loss", "mask_loss", "total")


@dataclass
class ReasonSegReport:
    giou: float
    ciou: float
    per_family: Dict[str, float] = field(default_factory=dict)
    history: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self, with_history: bool = False) -> dict:
        data = {"giou": self.giou, "ciou": self.ciou, "per_family": dict(self.per_family)}
        if with_history:
            data["history"] = list(self.history)
        return data


def split_corpus(corpus: Sequence[SegSample], held_out: int) -> Tuple[List[SegSample], List[SegSample]]:
    if held_out < 1 or held_out >= len(corpus):
        raise ValidationError(f"Cannot hold out {held_out} of {len(corpus)} samples")
    return list(corpus[:-held_out]), list(corpus[-held_out:])


def response_targets(input_ids: torch.Tensor, samples: Sequence[SegSample]) -> torch.Tensor:
    """Next-token targets over each response and its <eos>; everything else ignored"""
    targets = torch.full_like(input_ids, IGNORE_INDEX)
    for row, sample in enumerate(samples):
        length = len(sample.query.input_ids())
        start = sample.query.response_start
        targets[row, start - 1:length - 1] = input_ids[row, start:length]
    return targets


def evaluate_reason_seg(model: ReasonSegModel, samples: Sequence[SegSample]) -> ReasonSegReport:
    predictions, targets = [], []
    by_family = defaultdict(lambda: ([], []))
    for sample in samples:
        prediction = predict_mask(model, sample.image, sample.query).binary()[0]
        target = sample.gt_mask[0, 0]
        predictions.append(prediction)
        targets.append(target)
        by_family[sample.family][0].append(prediction)
        by_family[sample.family][1].append(target)
    per_family = {family: giou(p, t) for family, (p, t) in sorted(by_family.items())}
    return ReasonSegReport(giou(predictions, targets), ciou(predictions, targets), per_family)


def train_reason_seg(
    corpus: Sequence[SegSample],
    weights: Optional[LossWeights] = None,
    config: Optional[ReasonSegConfig] = None,
    checkpoint_dir: Optional[Path] = None,
    log_path: Optional[Path] = None,
    progress: bool = False,
    model: Optional[ReasonSegModel] = None,
) -> Tuple[ReasonSegModel, ReasonSegReport]:
    """Optimise the weighted text + mask objective, then score the held-out split"""
    weights = weights or LossWeights()
    config = config or ReasonSegConfig()
    train_set, held_out = split_corpus(corpus, config.held_out)
    torch.manual_seed(config.seed)
    if model is None:
        model = ReasonSegModel(config=config)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)

    history: List[Dict[str, float]] = []
    for step in tqdm(range(1, config.steps + 1), desc="train-reseg", disable=not progress):
        picks = torch.randint(len(train_set), (min(config.batch_size, len(train_set)),), generator=generator)
        batch_samples = [train_set[i] for i in picks.tolist()]
        batch = collate(batch_samples, model.vocab.pad_id)
        seg_positions = torch.tensor([s.query.seg_positions[0] for s in batch_samples])

        logits, mask_logits = model(batch["images"], batch["input_ids"], seg_positions, batch["lengths"])
        targets = response_targets(batch["input_ids"], batch_samples)
        txt = text_loss(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))
        probabilities = torch.sigmoid(mask_logits)
        pairs = [MaskPair(probabilities[b, 0], batch["masks"][b, 0]) for b in range(len(batch_samples))]
        mask = batch_mask_loss(pairs, weights)
        loss = total_loss(txt, mask, weights)

        record = {"step": step, "text_loss": txt.item(), "mask_loss": mask.item(), "total": loss.item()}
        if not all(math.isfinite(record[k]) for k in LOG_COLUMNS[1:]):
            raise TrainingDivergedError(step, {k: record[k] for k in LOG_COLUMNS[1:]})
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        history.append(record)
        logger.debug("step %d L_txt=%.5f L_mask=%.5f", step, record["text_loss"], record["mask_loss"])

    model.eval()
    report = evaluate_reason_seg(model, held_out)
    report.history = history
    if checkpoint_dir is not None:
        save_reason_seg(model, Path(checkpoint_dir) / "reason_seg.pt", config.steps)
    if log_path is not None:
        write_loss_log(history, log_path, LOG_COLUMNS)
    logger.info("Held-out gIoU %.4f, cIoU %.4f", report.giou, report.ciou)
    return model, report
