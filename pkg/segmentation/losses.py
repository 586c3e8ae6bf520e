"""
Mask and text losses for reasoning segmentation
"""

import math
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from pydantic import BaseModel, validator

from exceptions import ValidationError

BCE_EPS = 1e-7
DICE_SMOOTH = 1.0
IGNORE_INDEX = -100


class LossWeights(BaseModel):
    lambda_bce: float = 1.0
    lambda_dice: float = 1.0
    lambda_txt: float = 1.0
    lambda_mask: float = 1.0

    @validator("lambda_bce", "lambda_dice", "lambda_txt", "lambda_mask")
    def finite_nonnegative(cls, value):
        if not math.isfinite(value) or value < 0:
            raise ValueError("loss weights must be finite and >= 0")
        return value


@dataclass(frozen=True, eq=False)
class MaskPair:
    """Soft prediction in [0, 1] and its binary ground truth, same shape"""

    predicted: torch.Tensor
    ground_truth: torch.Tensor

    def __post_init__(self):
        if self.predicted.shape != self.ground_truth.shape:
            raise ValidationError(
                f"Predicted mask {tuple(self.predicted.shape)} does not match "
                f"ground truth {tuple(self.ground_truth.shape)}"
            )
        if not torch.isfinite(self.predicted).all():
            raise ValidationError("Predicted mask contains non-finite values")
        if (self.predicted < 0).any() or (self.predicted > 1).any():
            raise ValidationError("Predicted mask must lie in [0, 1]")
        if not ((self.ground_truth == 0) | (self.ground_truth == 1)).all():
            raise ValidationError("Ground-truth mask must be binary")


def bce_loss(pair: MaskPair, eps: float = BCE_EPS) -> torch.Tensor:
    predicted = pair.predicted.clamp(eps, 1.0 - eps)
    target = pair.ground_truth.to(predicted.dtype)
    return -(target * torch.log(predicted) + (1.0 - target) * torch.log(1.0 - predicted)).mean()


def dice_loss(pair: MaskPair, smooth: float = DICE_SMOOTH) -> torch.Tensor:
    predicted = pair.predicted
    target = pair.ground_truth.to(predicted.dtype)
    intersection = (predicted * target).sum()
    return 1.0 - (2.0 * intersection + smooth) / (predicted.sum() + target.sum() + smooth)


def mask_loss(pair: MaskPair, weights: LossWeights) -> torch.Tensor:
    return weights.lambda_bce * bce_loss(pair) + weights.lambda_dice * dice_loss(pair)


def batch_mask_loss(pairs: Sequence[MaskPair], weights: LossWeights) -> torch.Tensor:
    """Mean of ``mask_loss`` over the masks of successive ``<seg>`` tokens"""
    if not pairs:
        raise ValidationError("No masks to score")
    return torch.stack([mask_loss(pair, weights) for pair in pairs]).mean()


def text_loss(logits: torch.Tensor, targets: torch.Tensor, ignore_index: int = IGNORE_INDEX) -> torch.Tensor:
    """Mean token cross-entropy over positions whose target is not ``ignore_index``"""
    if logits.dim() != 2 or targets.dim() != 1 or logits.shape[0] != targets.shape[0]:
        raise ValidationError(
            f"Expected logits [T, V] and targets [T], got {tuple(logits.shape)} and {tuple(targets.shape)}"
        )
    vocab = logits.shape[1]
    if vocab < 2:
        raise ValidationError("Vocabulary must have at least 2 entries")
    kept = targets != ignore_index
    if not kept.any():
        raise ValidationError("Every target position is ignored")
    if (targets[kept] < 0).any() or (targets[kept] >= vocab).any():
        raise ValidationError("Target token outside the vocabulary")
    return F.cross_entropy(logits, targets.long(), ignore_index=ignore_index)


def total_loss(txt: torch.Tensor, mask: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    return weights.lambda_txt * txt + weights.lambda_mask * mask
