"""
Feature extractors for the perceptual distance
"""

from typing import List, Protocol, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


class FeatureExtractor(Protocol):
    def __call__(self, images: torch.Tensor) -> List[torch.Tensor]:
        ...


class RandomConvPyramid(nn.Module):
    """Fixed random conv stack; one feature grid per scale, each half the previous size"""

    def __init__(self, seed: int = 0, channels: Sequence[int] = (8, 16, 32)):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.weights = nn.ParameterList()
        self.biases = nn.ParameterList()
        previous = 3
        for width in channels:
            fan_in = previous * 9
            weight = torch.randn(width, previous, 3, 3, generator=generator, dtype=torch.float64) / fan_in ** 0.5
            bias = torch.randn(width, generator=generator, dtype=torch.float64) * 0.1
            self.weights.append(nn.Parameter(weight, requires_grad=False))
            self.biases.append(nn.Parameter(bias, requires_grad=False))
            previous = width

    def forward(self, images: torch.Tensor) -> List[torch.Tensor]:
        x = images.double() * 2.0 - 1.0
        features = []
        for scale, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            if scale:
                x = F.avg_pool2d(x, 2, ceil_mode=True)
            x = F.leaky_relu(F.conv2d(x, weight, bias, padding=1), 0.2)
            features.append(x)
        return features
