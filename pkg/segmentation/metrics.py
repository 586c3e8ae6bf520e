"""
Referring-segmentation scores
"""

from typing import Sequence

import torch

from exceptions import ValidationError


def _pairs(predictions: Sequence[torch.Tensor], targets: Sequence[torch.Tensor]):
    if len(predictions) != len(targets):
        raise ValidationError(f"{len(predictions)} predictions for {len(targets)} targets")
    if not len(predictions):
        raise ValidationError("Nothing to score")
    for prediction, target in zip(predictions, targets):
        if prediction.shape != target.shape:
            raise ValidationError(f"Mask shapes differ: {tuple(prediction.shape)} vs {tuple(target.shape)}")
        yield prediction > 0.5, target > 0.5


def giou(predictions: Sequence[torch.Tensor], targets: Sequence[torch.Tensor]) -> float:
    """Mean per-image IoU; two empty masks count as a perfect match"""
    scores = []
    for pred, gt in _pairs(predictions, targets):
        union = int((pred | gt).sum())
        scores.append(1.0 if union == 0 else int((pred & gt).sum()) / union)
    return sum(scores) / len(scores)


def ciou(predictions: Sequence[torch.Tensor], targets: Sequence[torch.Tensor]) -> float:
    """Cumulative intersection over cumulative union"""
    intersection = union = 0
    for pred, gt in _pairs(predictions, targets):
        intersection += int((pred & gt).sum())
        union += int((pred | gt).sum())
    return 1.0 if union == 0 else intersection / union
