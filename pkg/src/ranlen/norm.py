"""Mask-conditioned spatially-adaptive normalization.

Activations are normalized with per-sample, per-channel statistics, then
modulated elementwise by a scale/bias field predicted from the region mask
by a small two-layer CNN. Per-sample statistics keep the layer independent
of batch composition, so inference needs no running averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModulationField:
    """Spatial scale/bias maps matching the activation they modulate."""

    gamma: Tensor
    beta: Tensor


def channel_normalize(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Zero-mean unit-std per sample and channel over spatial positions.

    A constant channel has sigma = 0 and normalizes to exactly zero thanks
    to the epsilon in the denominator.
    """
    mu = x.mean(dim=(2, 3), keepdim=True)
    sigma = x.var(dim=(2, 3), keepdim=True, unbiased=False).sqrt()
    return (x - mu) / (sigma + eps)


def apply_modulation(activation: Tensor, field: ModulationField) -> Tensor:
    """gamma * normalized(activation) + beta, elementwise."""
    if field.gamma.shape != activation.shape:
        raise ValueError(
            f"field shape {tuple(field.gamma.shape)} does not match "
            f"activation shape {tuple(activation.shape)}"
        )
    return field.gamma * channel_normalize(activation) + field.beta


class ChannelNorm(nn.Module):
    """Parameter-free per-sample channel normalization (unconditioned stand-in)."""

    def forward(self, x: Tensor) -> Tensor:
        return channel_normalize(x)


class RanlenNorm(nn.Module):
    """Region-aware normalization layer.

    The mask is resized to the activation's resolution by nearest neighbor,
    embedded by a shared conv + ReLU, and two conv heads emit the modulation
    maps. Gamma is parameterized as 1 + delta with zero-initialized heads,
    so a fresh layer acts exactly like plain channel normalization and a
    converted network starts equivalent to its unmodulated form.
    """

    def __init__(self, in_channels: int, mask_embed_width: int = 32, kernel_size: int = 3):
        super().__init__()
        if in_channels < 1 or mask_embed_width < 1:
            raise ValueError("channel widths must be >= 1")
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {kernel_size}")
        pad = kernel_size // 2
        self.shared = nn.Conv2d(
            2, mask_embed_width, kernel_size, padding=pad, padding_mode="replicate"
        )
        self.gamma_head = nn.Conv2d(
            mask_embed_width, in_channels, kernel_size, padding=pad, padding_mode="replicate"
        )
        self.beta_head = nn.Conv2d(
            mask_embed_width, in_channels, kernel_size, padding=pad, padding_mode="replicate"
        )
        nn.init.zeros_(self.gamma_head.weight)
        nn.init.zeros_(self.gamma_head.bias)
        nn.init.zeros_(self.beta_head.weight)
        nn.init.zeros_(self.beta_head.bias)

    def embed_mask(self, mask: Tensor, target_hw: tuple[int, int]) -> ModulationField:
        """Predict the modulation field for an activation of size target_hw.

        `mask` is a float tensor (N, 2, H, W); values come from the binary
        region mask channels.
        """
        if min(target_hw) < 1:
            raise ValueError(f"target resolution must be >= 1x1, got {target_hw}")
        if tuple(mask.shape[-2:]) != tuple(target_hw):
            mask = F.interpolate(mask, size=tuple(target_hw), mode="nearest")
        hidden = F.relu(self.shared(mask))
        return ModulationField(
            gamma=1.0 + self.gamma_head(hidden),
            beta=self.beta_head(hidden),
        )

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        field = self.embed_mask(mask, x.shape[-2:])
        return apply_modulation(x, field)
