"""
Toy reasoning-segmentation model driven by the <seg> token

A causal text transformer reads the query and response; the hidden state at each
``<seg>`` position goes through an MLP and prompts a small mask decoder that
attends over the visual feature grid.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, validator

from exceptions import ModelNotReadyError, ValidationError
from tools import check_image
from .tokenizer import SegQuery, Vocabulary, default_vocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "reason-seg"
STEM_CHANNELS = 16


class ReasonSegConfig(BaseModel):
    image_size: int = 64
    d_model: int = 64
    fusion_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    decoder_layers: int = 2
    max_len: int = 32
    learning_rate: float = 5e-4
    batch_size: int = 16
    steps: int = 5000
    corpus_size: int = 4000
    held_out: int = 200
    family_ratios: Optional[Dict[str, float]] = None
    seed: int = 0

    @validator("image_size")
    def divisible_by_four(cls, value):
        if value < 8 or value % 4:
            raise ValueError("image_size must be a multiple of 4 and >= 8")
        return value

    @validator("num_heads")
    def heads_divide_width(cls, value, values):
        for key in ("d_model", "fusion_dim"):
            if key in values and values[key] % value:
                raise ValueError(f"{key} must be divisible by num_heads")
        return value

    @property
    def grid_size(self) -> int:
        return self.image_size // 4


@dataclass(frozen=True, eq=False)
class MaskPrediction:
    probabilities: torch.Tensor  # [K, H, W], one soft mask per <seg>
    ground_truth: Optional[torch.Tensor] = None

    def binary(self, threshold: float = 0.5) -> torch.Tensor:
        return (self.probabilities > threshold).to(self.probabilities.dtype)


def causal_mask(length: int, device=None) -> torch.Tensor:
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class TextEncoder(nn.Module):
    def __init__(self, vocab_size: int, config: ReasonSegConfig):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, config.d_model)
        self.position = nn.Embedding(config.max_len, config.d_model)
        layer = nn.TransformerEncoderLayer(
            config.d_model, config.num_heads, dim_feedforward=4 * config.d_model,
            dropout=0.0, batch_first=True, norm_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, config.num_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(config.d_model)
        self.max_len = config.max_len

    def forward(self, input_ids: torch.Tensor, padding_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        length = input_ids.shape[1]
        if length > self.max_len:
            raise ValidationError(f"Sequence of {length} tokens exceeds max_len {self.max_len}")
        positions = torch.arange(length, device=input_ids.device)
        x = self.embed(input_ids) + self.position(positions)[None]
        x = self.layers(x, mask=causal_mask(length, input_ids.device), src_key_padding_mask=padding_mask)
        return self.norm(x)


class SegProjection(nn.Module):
    def __init__(self, d_model: int, fusion_dim: int):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(d_model, d_model), nn.ReLU(), nn.Linear(d_model, fusion_dim))

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.mlp(hidden)


class VisualEncoder(nn.Module):
    """Full-resolution stem plus a stride-4 feature grid with learned positions"""

    def __init__(self, config: ReasonSegConfig):
        super().__init__()
        self.stem = nn.Sequential(nn.Conv2d(3, STEM_CHANNELS, 3, padding=1), nn.GELU())
        self.down = nn.Sequential(
            nn.Conv2d(STEM_CHANNELS, 32, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(32, config.fusion_dim, 3, stride=2, padding=1),
            nn.GELU(),
            nn.Conv2d(config.fusion_dim, config.fusion_dim, 3, padding=1),
        )
        self.position = nn.Parameter(torch.zeros(1, config.fusion_dim, config.grid_size, config.grid_size))
        nn.init.normal_(self.position, std=0.02)

    def forward(self, images: torch.Tensor):
        stem = self.stem(images)
        return stem, self.down(stem) + self.position


class MaskDecoder(nn.Module):
    """Prompt-token transformer over [seg, visual tokens], dot product, conv refinement"""

    def __init__(self, config: ReasonSegConfig):
        super().__init__()
        layer = nn.TransformerEncoderLayer(
            config.fusion_dim, config.num_heads, dim_feedforward=2 * config.fusion_dim,
            dropout=0.0, batch_first=True, norm_first=True,
        )
        self.mixer = nn.TransformerEncoder(layer, config.decoder_layers, enable_nested_tensor=False)
        self.refine = nn.Sequential(
            nn.Conv2d(STEM_CHANNELS + 1, STEM_CHANNELS, 3, padding=1),
            nn.GELU(),
            nn.Conv2d(STEM_CHANNELS, 1, 3, padding=1),
        )
        self.scale = 1.0 / math.sqrt(config.fusion_dim)

    def forward(self, seg_embedding: torch.Tensor, stem: torch.Tensor, grid: torch.Tensor) -> torch.Tensor:
        b, c, h, w = grid.shape
        tokens = torch.cat([seg_embedding[:, None, :], grid.flatten(2).transpose(1, 2)], dim=1)
        mixed = self.mixer(tokens)
        prompt, visual = mixed[:, :1], mixed[:, 1:]
        coarse = (visual @ prompt.transpose(1, 2)).transpose(1, 2).reshape(b, 1, h, w) * self.scale
        coarse = F.interpolate(coarse, size=stem.shape[2:], mode="bilinear", align_corners=False)
        return coarse + self.refine(torch.cat([stem, coarse], dim=1))


class ReasonSegModel(nn.Module):
    def __init__(self, vocab: Optional[Vocabulary] = None, config: Optional[ReasonSegConfig] = None):
        super().__init__()
        self.vocab = vocab or default_vocabulary()
        self.config = config or ReasonSegConfig()
        self.text = TextEncoder(len(self.vocab), self.config)
        self.lm_head = nn.Linear(self.config.d_model, len(self.vocab))
        self.seg_projection = SegProjection(self.config.d_model, self.config.fusion_dim)
        self.visual = VisualEncoder(self.config)
        self.decoder = MaskDecoder(self.config)

    def encode_text(self, input_ids: torch.Tensor, lengths: Optional[torch.Tensor] = None) -> torch.Tensor:
        padding_mask = None
        if lengths is not None:
            padding_mask = torch.arange(input_ids.shape[1], device=input_ids.device)[None] >= lengths[:, None]
        return self.text(input_ids, padding_mask)

    def decode_masks(self, seg_embeddings: torch.Tensor, images: torch.Tensor) -> torch.Tensor:
        """Mask logits ``[B, 1, H, W]`` for one seg embedding per image"""
        stem, grid = self.visual(images)
        return self.decoder(seg_embeddings, stem, grid)

    def forward(self, images: torch.Tensor, input_ids: torch.Tensor, seg_positions: torch.Tensor,
                lengths: Optional[torch.Tensor] = None):
        """Training form: exactly one ``<seg>`` position per sequence"""
        hidden = self.encode_text(input_ids, lengths)
        logits = self.lm_head(hidden)
        rows = torch.arange(hidden.shape[0], device=hidden.device)
        seg_embeddings = self.seg_projection(hidden[rows, seg_positions])
        return logits, self.decode_masks(seg_embeddings, images)


def extract_seg_embedding(hidden_states: torch.Tensor, seg_positions: Sequence[int],
                          projection: nn.Module) -> torch.Tensor:
    """MLP-projected hidden state at each ``<seg>`` position, in order: ``[K, F]``"""
    if hidden_states.dim() != 2:
        raise ValidationError(f"hidden_states must be [T, D], got {tuple(hidden_states.shape)}")
    length = hidden_states.shape[0]
    for position in seg_positions:
        if not 0 <= position < length:
            raise ValidationError(f"<seg> position {position} outside a sequence of {length}")
    if not len(seg_positions):
        raise ValidationError("No <seg> positions given")
    index = torch.as_tensor(list(seg_positions), dtype=torch.long, device=hidden_states.device)
    return projection(hidden_states[index])


@torch.no_grad()
def predict_mask(model: ReasonSegModel, image: torch.Tensor, query: SegQuery,
                 pad_to: Optional[int] = None) -> MaskPrediction:
    """Soft mask per ``<seg>`` token; masks are decoded one after another"""
    if not query.seg_positions:
        raise ValidationError("Query response carries no <seg> token")
    image = check_image(image)
    if image.shape[0] != 1:
        raise ValidationError("predict_mask takes a single image")
    ids = query.input_ids()
    if any(ids[p] != model.vocab.seg_id for p in query.seg_positions):
        raise ValidationError("Query seg_positions do not point at <seg> tokens")
    length = len(ids)
    padded = ids + [model.vocab.pad_id] * max(0, (pad_to or length) - length)
    was_training = model.training
    model.eval()
    try:
        input_ids = torch.tensor([padded], dtype=torch.long)
        hidden = model.encode_text(input_ids, torch.tensor([length]))[0]
        embeddings = extract_seg_embedding(hidden, query.seg_positions, model.seg_projection)
        masks = [model.decode_masks(embedding[None], image) for embedding in embeddings]
    finally:
        model.train(was_training)
    return MaskPrediction(torch.sigmoid(torch.cat(masks)[:, 0]))


def save_reason_seg(model: ReasonSegModel, path: Union[str, Path], step: Optional[int] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kind": CHECKPOINT_KIND,
            "config_json": json.dumps(model.config.dict(), sort_keys=True),
            "vocab": model.vocab.to_list(),
            "step": -1 if step is None else step,
            "state_dict": model.state_dict(),
        },
        path,
    )
    logger.info("Saved reasoning-segmentation checkpoint to %s", path)
    return path


def load_reason_seg(path: Union[str, Path]) -> ReasonSegModel:
    path = Path(path)
    if not path.exists():
        raise ModelNotReadyError(f"Reasoning-segmentation checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("kind") != CHECKPOINT_KIND:
        raise ModelNotReadyError(f"{path} is not a reasoning-segmentation checkpoint")
    model = ReasonSegModel(Vocabulary(payload["vocab"]), ReasonSegConfig(**json.loads(payload["config_json"])))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
