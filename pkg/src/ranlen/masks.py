"""Two-channel region masks: partitioning, circle sampling, morphology, PNG I/O.

A mask carries two binary channels: channel 0 marks the area to enhance,
channel 1 marks enhance + transition. Channel 0 must be a subset of
channel 1; the complement of channel 1 is the area left untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

BAND_MODES = ("dilate-out", "erode-in")


class MaskError(ValueError):
    """Mask violates the two-channel containment convention or file format."""


class EmptyAreaWarning(UserWarning):
    """Erosion removed every pixel of the enhancement area."""


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Binary (2, H, W) mask; channel 0 = enhance, channel 1 = enhance + band."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise MaskError(f"mask must have shape (2, H, W), got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise MaskError("mask values must be strictly binary (0 or 1)")
        arr = arr.astype(np.uint8)
        if np.any(arr[0] > arr[1]):
            raise MaskError("channel 0 must be contained in channel 1")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class AreaPartition:
    """Disjoint-exhaustive split of the frame with per-area coverage fractions."""

    area_a: np.ndarray
    area_b: np.ndarray
    area_c: np.ndarray
    r_a: float
    r_b: float
    r_c: float


@dataclass(frozen=True)
class CircleSpec:
    """Concentric circles: inner radius bounds the enhance area, outer the band."""

    center_x: float
    center_y: float
    r1: float
    r2: float

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise ValueError(f"radii must satisfy 0 < r1 < r2, got {self.r1}, {self.r2}")


def partition(mask: RegionMask) -> AreaPartition:
    """Split the frame into enhance (A), transition (B), and untouched (C) areas.

    A is where channel 0 is set, B where only channel 1 is set, C where
    neither is. Coverage fractions are exact pixel counts over H*W.
    """
    ch0 = mask.data[0].astype(bool)
    ch1 = mask.data[1].astype(bool)
    area_a = ch0
    area_b = ch1 & ~ch0
    area_c = ~ch1
    total = mask.height * mask.width
    return AreaPartition(
        area_a=area_a,
        area_b=area_b,
        area_c=area_c,
        r_a=int(area_a.sum()) / total,
        r_b=int(area_b.sum()) / total,
        r_c=int(area_c.sum()) / total,
    )


def rasterize_circle(spec: CircleSpec, height: int, width: int) -> RegionMask:
    """Rasterize concentric circles using pixel-center distances; ties are inside."""
    yy = np.arange(height, dtype=np.float64)[:, None]
    xx = np.arange(width, dtype=np.float64)[None, :]
    dist = np.hypot(xx - spec.center_x, yy - spec.center_y)
    ch0 = (dist <= spec.r1).astype(np.uint8)
    ch1 = (dist <= spec.r2).astype(np.uint8)
    return RegionMask(np.stack([ch0, ch1]))


def sample_circle(height: int, width: int, rng) -> tuple[RegionMask, CircleSpec]:
    """Sample a random circular mask: r1 = 2*min(H,W)/7, r2 ~ U(1.2*r1, 1.25*r1).

    The center is uniform over the image, so circles may clip at the borders.
    `rng` is an integer seed or a numpy Generator; results are deterministic
    for a given generator state.
    """
    if height < 8 or width < 8:
        raise ValueError(f"image must be at least 8x8, got {height}x{width}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    m = min(height, width)
    r1 = 2.0 * m / 7.0
    r2 = rng.uniform(1.2 * r1, 1.25 * r1)
    center_x = rng.uniform(0.0, width - 1.0)
    center_y = rng.uniform(0.0, height - 1.0)
    spec = CircleSpec(center_x=center_x, center_y=center_y, r1=r1, r2=r2)
    return rasterize_circle(spec, height, width), spec


def disk(radius: int) -> np.ndarray:
    """Boolean disk structuring element of the given pixel radius."""
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1)
    return (offsets[:, None] ** 2 + offsets[None, :] ** 2) <= radius**2


def derive_band(area_a_mask: np.ndarray, mode: str, radius_px: int) -> RegionMask:
    """Grow or shrink a single-channel mask into a two-channel mask with a band.

    dilate-out keeps the input as the enhance area and dilates it to get the
    band; erode-in keeps the input as the outer boundary and erodes it to get
    the enhance area. Erosion that empties the enhance area still returns a
    mask but emits EmptyAreaWarning.
    """
    if mode not in BAND_MODES:
        raise ValueError(f"mode must be one of {BAND_MODES}, got {mode!r}")
    if radius_px < 1:
        raise ValueError(f"radius_px must be >= 1, got {radius_px}")
    area = np.asarray(area_a_mask)
    if not np.isin(area, (0, 1)).all():
        raise MaskError("input mask must be binary")
    area = area.astype(bool)
    selem = disk(radius_px)
    if mode == "dilate-out":
        ch0 = area
        ch1 = ndimage.binary_dilation(area, structure=selem)
    else:
        ch1 = area
        ch0 = ndimage.binary_erosion(area, structure=selem)
        if not ch0.any():
            warnings.warn(
                f"erosion with radius {radius_px} emptied the enhancement area",
                EmptyAreaWarning,
                stacklevel=2,
            )
    return RegionMask(np.stack([ch0, ch1]).astype(np.uint8))


def save_mask(mask: RegionMask, path) -> None:
    """Write the mask as an RGB PNG: R = channel 0, G = channel 1, B = 0."""
    h, w = mask.height, mask.width
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    rgb[..., 0] = mask.data[0] * 255
    rgb[..., 1] = mask.data[1] * 255
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def load_mask(path) -> RegionMask:
    """Read an RG-convention mask PNG; any channel value >= 128 counts as set."""
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise MaskError(f"mask PNG must be RGB, got mode {img.mode!r}")
        arr = np.asarray(img)
    ch0 = (arr[..., 0] >= 128).astype(np.uint8)
    ch1 = (arr[..., 1] >= 128).astype(np.uint8)
    if np.any(ch0 > ch1):
        raise MaskError("mask PNG violates containment: R channel not within G channel")
    return RegionMask(np.stack([ch0, ch1]))
