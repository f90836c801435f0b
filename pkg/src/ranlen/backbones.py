"""Small enhancement networks with region-conditioned normalization sites.

These are deliberately compact stand-in backbones — a plain conv encoder
with either a curve head (iterative quadratic tone update) or a Retinex
head (illumination map, output = input / illumination). What is under test
is the mask conditioning, the region losses, and the degree control; the
backbones themselves make no claim to match any production network.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .norm import ChannelNorm, RanlenNorm

BACKBONES = ("curve", "retinex")
CONDITIONINGS = ("ranlen", "concat", "none")


@dataclass
class ModelConfig:
    backbone: str = "curve"
    conditioning: str = "ranlen"
    width: int = 32
    depth: int = 6
    ranlen_sites: tuple[int, ...] = (1, 3)
    curve_iterations: int = 4
    l_min: float = 0.01
    mask_embed_width: int = 32
    kernel_size: int = 3

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.conditioning not in CONDITIONINGS:
            raise ValueError(
                f"conditioning must be one of {CONDITIONINGS}, got {self.conditioning!r}"
            )
        self.ranlen_sites = tuple(self.ranlen_sites)
        if self.conditioning == "ranlen" and not self.ranlen_sites:
            raise ValueError("ranlen conditioning requires at least one site")
        if any(s < 0 or s >= self.depth for s in self.ranlen_sites):
            raise ValueError(f"sites must lie in [0, {self.depth}), got {self.ranlen_sites}")
        if self.curve_iterations < 1:
            raise ValueError("curve_iterations must be >= 1")
        if not 0 < self.l_min < 1:
            raise ValueError(f"l_min must lie in (0, 1), got {self.l_min}")

    @property
    def in_channels(self) -> int:
        # concat feeds RGB plus both mask channels through the first conv
        return 5 if self.conditioning == "concat" else 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class EnhancementOutput:
    """Enhanced image plus the intermediate map the loss and degree control need.

    `intermediate` is the curve-parameter stack (N, iterations*3, H, W) in
    [-1, 1] for the curve backbone, or the illumination map (N, 3, H, W) in
    [l_min, 1] for the Retinex backbone. `pre_refinement` is the enhanced
    image before the refinement conv, `source` the network input image.
    """

    enhanced: Tensor
    intermediate: Tensor
    pre_refinement: Tensor
    source: Tensor
    kind: str


def apply_curve(image: Tensor, curves: Tensor, iterations: int) -> Tensor:
    """Iterative quadratic tone update x <- x + c * x * (1 - x).

    Pixels at 0 or 1 are fixed points of every iteration; for c in [-1, 1]
    the output stays in [0, 1].
    """
    x = image
    for i in range(iterations):
        c = curves[:, 3 * i : 3 * (i + 1)]
        x = x + c * x * (1.0 - x)
    return x


class RefinementTail(nn.Module):
    """Single 3x3 conv after the output tail, initialized to the identity."""

    def __init__(self, channels: int = 3):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)
        with torch.no_grad():
            for c in range(channels):
                self.conv.weight[c, c, 1, 1] = 1.0

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Enhancer(nn.Module):
    """Conv encoder + curve/Retinex output tail + refinement conv.

    Normalization sites listed in config.ranlen_sites hold a RanlenNorm for
    ranlen conditioning and a parameter-free ChannelNorm otherwise, so the
    ranlen variant with zero-initialized modulation heads computes exactly
    the same function as the unconditioned variant with shared encoder
    weights.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        w = config.width
        convs = []
        for i in range(config.depth):
            in_ch = config.in_channels if i == 0 else w
            convs.append(nn.Conv2d(in_ch, w, 3, padding=1))
        self.convs = nn.ModuleList(convs)
        norms = {}
        for site in config.ranlen_sites:
            if config.conditioning == "ranlen":
                norms[str(site)] = RanlenNorm(
                    w,
                    mask_embed_width=config.mask_embed_width,
                    kernel_size=config.kernel_size,
                )
            else:
                norms[str(site)] = ChannelNorm()
        self.norms = nn.ModuleDict(norms)
        out_ch = 3 * config.curve_iterations if config.backbone == "curve" else 3
        self.head = nn.Conv2d(w, out_ch, 3, padding=1)
        self.refine = RefinementTail(3)

    def forward(self, image: Tensor, mask: Tensor | None = None) -> EnhancementOutput:
        cfg = self.config
        if cfg.conditioning != "none" and mask is None:
            raise ValueError(f"{cfg.conditioning} conditioning requires a mask")
        if mask is not None and mask.shape[-2:] != image.shape[-2:]:
            raise ValueError(
                f"mask resolution {tuple(mask.shape[-2:])} does not match "
                f"image {tuple(image.shape[-2:])}"
            )
        h = torch.cat([image, mask], dim=1) if cfg.conditioning == "concat" else image
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if str(i) in self.norms:
                norm = self.norms[str(i)]
                h = norm(h, mask) if cfg.conditioning == "ranlen" else norm(h)
            h = F.relu(h)
        if cfg.backbone == "curve":
            curves = torch.tanh(self.head(h))
            pre = apply_curve(image, curves, cfg.curve_iterations)
            intermediate = curves
        else:
            illum = cfg.l_min + (1.0 - cfg.l_min) * torch.sigmoid(self.head(h))
            pre = torch.clamp(image / illum, 0.0, 1.0)
            intermediate = illum
        enhanced = torch.clamp(self.refine(pre), 0.0, 1.0)
        return EnhancementOutput(
            enhanced=enhanced,
            intermediate=intermediate,
            pre_refinement=pre,
            source=image,
            kind=cfg.backbone,
        )


def apply_degree(
    model: Enhancer, output: EnhancementOutput, alpha_degree: float
) -> EnhancementOutput:
    """Rescale the predicted map by alpha and recompute the enhanced image.

    Retinex: output = clamp(I / (alpha * L)), so smaller alpha brightens.
    Curve: the curve stack is clamped to [-1, 1] and multiplied by alpha
    before re-running the iterative update. The refinement conv is reapplied
    because degree control manipulates the predicted map, not final pixels.
    """
    if alpha_degree <= 0:
        raise ValueError(f"alpha_degree must be > 0, got {alpha_degree}")
    if output.kind == "retinex":
        scaled = alpha_degree * output.intermediate
        pre = torch.clamp(output.source / scaled, 0.0, 1.0)
    else:
        scaled = alpha_degree * torch.clamp(output.intermediate, -1.0, 1.0)
        pre = apply_curve(output.source, scaled, model.config.curve_iterations)
    enhanced = torch.clamp(model.refine(pre), 0.0, 1.0)
    return EnhancementOutput(
        enhanced=enhanced,
        intermediate=scaled,
        pre_refinement=pre,
        source=output.source,
        kind=output.kind,
    )
