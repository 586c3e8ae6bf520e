"""
Reasoning segmentation: <seg>-token model, losses, synthetic corpus
"""

from .corpus import (
    FAMILIES,
    SceneLayout,
    SegSample,
    compose_scene,
    family_for,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
)
from .losses import LossWeights, MaskPair, batch_mask_loss, bce_loss, dice_loss, mask_loss, text_loss, total_loss
from .metrics import ciou, giou
from .model import (
    MaskPrediction,
    ReasonSegConfig,
    ReasonSegModel,
    extract_seg_embedding,
    load_reason_seg,
    predict_mask,
    save_reason_seg,
)
from .tokenizer import SegQuery, Vocabulary, build_query, default_vocabulary
from .train import ReasonSegReport, evaluate_reason_seg, train_reason_seg

__all__ = [
    "FAMILIES",
    "LossWeights",
    "MaskPair",
    "MaskPrediction",
    "ReasonSegConfig",
    "ReasonSegModel",
    "ReasonSegReport",
    "SegQuery",
    "SceneLayout",
    "SegSample",
    "Vocabulary",
    "batch_mask_loss",
    "bce_loss",
    "build_query",
    "ciou",
    "compose_scene",
    "default_vocabulary",
    "dice_loss",
    "evaluate_reason_seg",
    "extract_seg_embedding",
    "family_for",
    "generate_synthetic_corpus",
    "giou",
    "load_corpus",
    "load_reason_seg",
    "mask_loss",
    "predict_mask",
    "save_corpus",
    "save_reason_seg",
    "text_loss",
    "total_loss",
    "train_reason_seg",
]
