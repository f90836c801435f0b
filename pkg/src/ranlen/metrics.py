"""Area-restricted image quality metrics and a transition-band diagnostic.

PSNR and SSIM are computed on mask-multiplied image pairs so that only the
enhancement area drives the score. The band diagnostic is an unweighted
curvature energy: no established metric quantifies transition quality, so
it is reported for comparisons (lower = smoother) without further claims.

Images are numpy arrays (3, H, W) or (H, W) with values in [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .masks import AreaPartition

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    image_id: str
    psnr_db: float
    ssim: float
    r_a: float
    curvature_energy: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "file": self.image_id,
                "psnr_db": self.psnr_db,
                "ssim": self.ssim,
                "r_a": self.r_a,
                "curvature_energy": self.curvature_energy,
            }
        )


def _as_chw(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (C, H, W) or (H, W) image, got shape {arr.shape}")
    return arr


def masked_psnr(enhanced: np.ndarray, reference: np.ndarray, part: AreaPartition) -> float:
    """PSNR over area A only: 10 * log10(1 / MSE_A), capped at 99 dB.

    The area-restricted MSE equals the full-frame masked MSE divided by the
    coverage r_a, which keeps the score independent of how small the area is.
    """
    enhanced = _as_chw(enhanced)
    reference = _as_chw(reference)
    a = part.area_a
    n_a = int(a.sum())
    if n_a == 0:
        raise ValueError("area A is empty; masked PSNR is undefined")
    err = (enhanced - reference)[:, a]
    mse = float(np.mean(err**2))
    if mse <= 0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def masked_psnr_paper_literal(
    enhanced: np.ndarray, reference: np.ndarray, part: AreaPartition
) -> float:
    """Full-frame masked PSNR multiplied by 1/r_a.

    Kept for comparison only: scaling a dB value by an area fraction is
    dimensionally odd and not the default reported by this package.
    """
    enhanced = _as_chw(enhanced)
    reference = _as_chw(reference)
    if part.r_a == 0:
        raise ValueError("area A is empty; masked PSNR is undefined")
    a = part.area_a.astype(np.float64)
    mse = float(np.mean(((enhanced - reference) * a) ** 2))
    if mse <= 0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse) / part.r_a, PSNR_CAP_DB)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - size // 2
    k = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return k / k.sum()


def _window_means(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable Gaussian filtering, cropped to windows fully inside the frame
    r = len(kernel) // 2
    t = ndimage.correlate1d(plane, kernel, axis=0, mode="constant")
    t = ndimage.correlate1d(t, kernel, axis=1, mode="constant")
    return t[r:-r, r:-r]


def _ssim_plane(x: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_x = _window_means(x, kernel)
    mu_y = _window_means(y, kernel)
    var_x = _window_means(x * x, kernel) - mu_x**2
    var_y = _window_means(y * y, kernel) - mu_y**2
    cov = _window_means(x * y, kernel) - mu_x * mu_y
    return ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )


def masked_ssim(enhanced: np.ndarray, reference: np.ndarray, part: AreaPartition) -> float:
    """SSIM between the area-A-masked products, mean-pooled over the frame.

    Gaussian window 11, sigma 1.5, K1=0.01, K2=0.03, dynamic range 1. The
    mean runs over every window fully inside the frame, so only pixels
    within the window radius of area A can influence the score.
    """
    enhanced = _as_chw(enhanced)
    reference = _as_chw(reference)
    h, w = enhanced.shape[-2:]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")
    a = part.area_a.astype(np.float64)
    kernel = _gaussian_kernel()
    planes = [
        _ssim_plane(enhanced[c] * a, reference[c] * a, kernel)
        for c in range(enhanced.shape[0])
    ]
    return float(np.mean(planes))


def _np_second_diff_xx(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    out[..., 1:-1] = t[..., 2:] - 2.0 * t[..., 1:-1] + t[..., :-2]
    return out


def _np_second_diff_yy(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    out[..., 1:-1, :] = t[..., 2:, :] - 2.0 * t[..., 1:-1, :] + t[..., :-2, :]
    return out


def _np_second_diff_xy(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    out[..., 1:, 1:] = t[..., 1:, 1:] - t[..., :-1, 1:] - t[..., 1:, :-1] + t[..., :-1, :-1]
    return out


def b_curvature_energy(image: np.ndarray, part: AreaPartition) -> float:
    """Unweighted sum of squared second differences over the transition band.

    The cross stencil counts twice (xy and yx), matching the four-term
    structure of the training loss but without the edge-aware weights.
    Exactly zero for affine images.
    """
    arr = _as_chw(image)
    b = part.area_b
    energy = (
        _np_second_diff_xx(arr) ** 2
        + 2.0 * _np_second_diff_xy(arr) ** 2
        + _np_second_diff_yy(arr) ** 2
    )
    return float(energy[:, b].sum())


def write_report_lines(reports, stream) -> None:
    """Write one JSON object per image to an open text stream."""
    for report in reports:
        stream.write(report.to_json() + "\n")
