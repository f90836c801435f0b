"""Region-weighted training objective.

Area A (enhance) gets reconstruction + color losses, plus an edge-aware
first-order smoothness prior on the illumination map for Retinex backbones.
Area B (transition) gets the gradient-smooth loss: squared second-order
finite differences of the predicted map, weighted inversely by the input
image's own second-order log-luminance gradients so smoothing relaxes
across real input edges. Area C (keep dark) gets reconstruction against
the input. The total divides each term by its area's coverage fraction.

Shape conventions: images and maps are (N, C, H, W); area masks are
(N, H, W) boolean or {0,1} float tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor

LOG_FLOOR = 1.0 / 255.0
_LUMA = (0.299, 0.587, 0.114)


@dataclass
class LossWeights:
    alpha_w: float = 1.0
    beta_w: float = 1e-4
    gamma_w: float = 1.0
    s_exponent: float = 1.2
    eps_w: float = 1e-4
    recon_w: float = 1.0
    color_w: float = 0.1
    illum_smooth_w: float = 0.1

    def __post_init__(self):
        for name in ("alpha_w", "beta_w", "gamma_w", "recon_w", "color_w", "illum_smooth_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.eps_w <= 0:
            raise ValueError("eps_w must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass
class LossBreakdown:
    """Raw per-area terms, coverage divisors, and the weighted total.

    l_a/l_b/l_c are batch means of the per-sample raw terms; coverages hold
    the per-sample divisors (N, 3). The total applies the coverage division
    per sample (terms with zero coverage drop out) and then averages.
    """

    l_a: Tensor
    l_b: Tensor
    l_c: Tensor
    total: Tensor
    coverages: Tensor


def luminance(image: Tensor) -> Tensor:
    """Rec. 601 luma, (N, 3, H, W) -> (N, 1, H, W)."""
    r, g, b = image[:, 0:1], image[:, 1:2], image[:, 2:3]
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def _as_mask(mask: Tensor, like: Tensor) -> Tensor:
    # (N, H, W) -> (N, 1, H, W) float of the target dtype
    if mask.dim() == 2:
        mask = mask.unsqueeze(0)
    return mask.to(like.dtype).unsqueeze(1)


def second_diff_xx(t: Tensor) -> Tensor:
    """[1, -2, 1] along x in the interior; borders carry zero curvature."""
    out = torch.zeros_like(t)
    out[..., 1:-1] = t[..., 2:] - 2.0 * t[..., 1:-1] + t[..., :-2]
    return out


def second_diff_yy(t: Tensor) -> Tensor:
    """[1, -2, 1] along y in the interior; borders carry zero curvature."""
    out = torch.zeros_like(t)
    out[..., 1:-1, :] = t[..., 2:, :] - 2.0 * t[..., 1:-1, :] + t[..., :-2, :]
    return out


def second_diff_xy(t: Tensor) -> Tensor:
    """Compact cross difference; first row/column carry zero curvature.

    Like the axis stencils, this annihilates affine maps exactly, border
    pixels included.
    """
    out = torch.zeros_like(t)
    out[..., 1:, 1:] = t[..., 1:, 1:] - t[..., :-1, 1:] - t[..., 1:, :-1] + t[..., :-1, :-1]
    return out


def smoothness_weights(
    image: Tensor, s_exponent: float = 1.2, eps_w: float = 1e-4
) -> tuple[Tensor, Tensor, Tensor]:
    """Inverse second-order log-luminance gradient magnitudes (w_xx, w_xy, w_yy).

    Sharper input edges give smaller weights, so the smoothing prior relaxes
    there. Luminance is clamped to [1/255, 1] before the log to keep black
    pixels finite. Weights are detached: they depend only on the input image.
    """
    log_lum = torch.log(torch.clamp(luminance(image), LOG_FLOOR, 1.0)).detach()
    w = []
    for op in (second_diff_xx, second_diff_xy, second_diff_yy):
        w.append(1.0 / (op(log_lum).abs() ** s_exponent + eps_w))
    return w[0], w[1], w[2]


def _gradient_smooth_per_sample(
    target_map: Tensor, image: Tensor, area_b: Tensor, weights: LossWeights
) -> Tensor:
    w_xx, w_xy, w_yy = smoothness_weights(image, weights.s_exponent, weights.eps_w)
    d_xx = second_diff_xx(target_map)
    d_xy = second_diff_xy(target_map)
    d_yy = second_diff_yy(target_map)
    # the xy and yx stencils coincide, so the cross term appears twice
    per_pixel = (
        w_xx * d_xx.pow(2) + 2.0 * w_xy * d_xy.pow(2) + w_yy * d_yy.pow(2)
    )
    m = _as_mask(area_b, target_map)
    return (per_pixel * m).sum(dim=(1, 2, 3))


def gradient_smooth_loss(
    target_map: Tensor, image: Tensor, area_b: Tensor, weights: LossWeights | None = None
) -> Tensor:
    """Edge-aware second-order smoothness over the transition band.

    `target_map` is the illumination map for Retinex backbones and the
    predicted image otherwise. The result is the per-sample sum over band
    pixels (the total loss divides by band coverage), averaged over the
    batch. Exactly zero for constant and affine target maps.
    """
    weights = weights or LossWeights()
    return _gradient_smooth_per_sample(target_map, image, area_b, weights).mean()


def _masked_mse_per_sample(a: Tensor, b: Tensor, area: Tensor) -> Tensor:
    m = _as_mask(area, a)
    count = (m.sum(dim=(1, 2, 3)) * a.shape[1]).clamp(min=1.0)
    return ((a - b).pow(2) * m).sum(dim=(1, 2, 3)) / count


def _first_diff_x(t: Tensor) -> Tensor:
    out = torch.zeros_like(t)
    out[..., :-1] = t[..., 1:] - t[..., :-1]
    return out


def _first_diff_y(t: Tensor) -> Tensor:
    out = torch.zeros_like(t)
    out[..., :-1, :] = t[..., 1:, :] - t[..., :-1, :]
    return out


def _illum_smooth_per_sample(illumination: Tensor, image: Tensor, area: Tensor) -> Tensor:
    # first-order edge-aware prior on the illumination map, restricted to A
    lum = luminance(image).detach()
    w_x = torch.exp(-_first_diff_x(lum).abs())
    w_y = torch.exp(-_first_diff_y(lum).abs())
    per_pixel = (w_x * _first_diff_x(illumination).abs()).mean(dim=1, keepdim=True) + (
        w_y * _first_diff_y(illumination).abs()
    ).mean(dim=1, keepdim=True)
    m = _as_mask(area, illumination)
    count = m.sum(dim=(1, 2, 3)).clamp(min=1.0)
    return (per_pixel * m).sum(dim=(1, 2, 3)) / count


def _color_per_sample(enhanced: Tensor, reference: Tensor, area: Tensor) -> Tensor:
    cos = F.cosine_similarity(enhanced, reference, dim=1, eps=1e-8)
    m = area.to(enhanced.dtype)
    count = m.sum(dim=(1, 2)).clamp(min=1.0)
    return ((1.0 - cos) * m).sum(dim=(1, 2)) / count


def _area_a_per_sample(
    enhanced: Tensor,
    reference: Tensor,
    image: Tensor,
    area_a: Tensor,
    illumination: Tensor | None,
    weights: LossWeights,
) -> Tensor:
    term = weights.recon_w * _masked_mse_per_sample(enhanced, reference, area_a)
    term = term + weights.color_w * _color_per_sample(enhanced, reference, area_a)
    if illumination is not None:
        term = term + weights.illum_smooth_w * _illum_smooth_per_sample(
            illumination, image, area_a
        )
    return term


def loss_area_a(
    enhanced: Tensor,
    reference: Tensor,
    image: Tensor,
    area_a: Tensor,
    illumination: Tensor | None = None,
    weights: LossWeights | None = None,
) -> Tensor:
    """Enhancement loss over area A: masked MSE + color cosine term.

    Retinex backbones pass their illumination map to add the first-order
    edge-aware smoothness prior; curve backbones pass None.
    """
    weights = weights or LossWeights()
    return _area_a_per_sample(enhanced, reference, image, area_a, illumination, weights).mean()


def loss_area_c(enhanced: Tensor, image: Tensor, area_c: Tensor) -> Tensor:
    """Reconstruction against the input over the kept-dark area C."""
    return _masked_mse_per_sample(enhanced, image, area_c).mean()


def total_loss(
    enhanced: Tensor,
    reference: Tensor,
    image: Tensor,
    area_a: Tensor,
    area_b: Tensor,
    area_c: Tensor,
    weights: LossWeights | None = None,
    illumination: Tensor | None = None,
    smooth_target: Tensor | None = None,
) -> LossBreakdown:
    """Coverage-balanced combination of the three area losses.

    total = alpha * L_A / r_a + beta * L_B / r_b + gamma * L_C / r_c,
    evaluated per sample with that sample's coverages; a term whose area is
    empty contributes nothing. The smooth target defaults to the
    illumination map when given, otherwise to the enhanced image.
    """
    weights = weights or LossWeights()
    if smooth_target is None:
        smooth_target = illumination if illumination is not None else enhanced
    n, _, h, w = enhanced.shape
    total_px = float(h * w)
    r_a = area_a.to(enhanced.dtype).sum(dim=(1, 2)) / total_px
    r_b = area_b.to(enhanced.dtype).sum(dim=(1, 2)) / total_px
    r_c = area_c.to(enhanced.dtype).sum(dim=(1, 2)) / total_px

    la = _area_a_per_sample(enhanced, reference, image, area_a, illumination, weights)
    lb = _gradient_smooth_per_sample(smooth_target, image, area_b, weights)
    lc = _masked_mse_per_sample(enhanced, image, area_c)

    zero = torch.zeros_like(la)
    total = (
        torch.where(r_a > 0, weights.alpha_w * la / r_a.clamp(min=1e-12), zero)
        + torch.where(r_b > 0, weights.beta_w * lb / r_b.clamp(min=1e-12), zero)
        + torch.where(r_c > 0, weights.gamma_w * lc / r_c.clamp(min=1e-12), zero)
    )
    return LossBreakdown(
        l_a=la.mean(),
        l_b=lb.mean(),
        l_c=lc.mean(),
        total=total.mean(),
        coverages=torch.stack([r_a, r_b, r_c], dim=1),
    )
