"""Paired low/reference image folders and a synthetic desk-scale generator.

Directory layout: root/low and root/high hold filename-matched 8-bit PNGs
or JPEGs. Images load as float32 (3, H, W) arrays in [0, 1] via /255.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class DataError(Exception):
    """Dataset missing, empty, or structurally inconsistent."""


@dataclass(frozen=True)
class PairedSample:
    low: np.ndarray
    reference: np.ndarray
    id: str


class PairedData:
    """An ordered list of paired samples plus a report of skipped files."""

    def __init__(self, samples: list[PairedSample], skipped: list[str] | None = None):
        self.samples = list(samples)
        self.skipped = list(skipped or [])

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx) -> PairedSample:
        return self.samples[idx]

    def __iter__(self):
        return iter(self.samples)


def load_image(path) -> np.ndarray:
    """Read an 8-bit image as float32 (3, H, W) in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.transpose(arr, (2, 0, 1))


def save_image(image: np.ndarray, path) -> None:
    """Write a float (3, H, W) image in [0, 1] as an 8-bit PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    hwc = np.transpose(arr, (1, 2, 0))
    Image.fromarray(np.round(hwc * 255.0).astype(np.uint8)).save(path, format="PNG")


def resize_long_edge(image: np.ndarray, target: int = 256) -> np.ndarray:
    """Bilinear resize so the long edge equals target, aspect ratio preserved.

    The short edge rounds half up. Images whose long edge already matches
    are returned unchanged.
    """
    if target < 8:
        raise ValueError(f"target must be >= 8, got {target}")
    _, h, w = image.shape
    long_edge = max(h, w)
    if long_edge == target:
        return image
    scale = target / long_edge
    new_h = target if h == long_edge else int(np.floor(h * scale + 0.5))
    new_w = target if w == long_edge else int(np.floor(w * scale + 0.5))
    t = torch.from_numpy(np.ascontiguousarray(image)).unsqueeze(0)
    resized = F.interpolate(t, size=(new_h, new_w), mode="bilinear", align_corners=False)
    return resized.squeeze(0).numpy()


def load_paired_dir(root, long_edge: int | None = None) -> PairedData:
    """Load filename-matched pairs from root/low and root/high.

    Pairs are ordered lexicographically by filename; files present in only
    one folder are skipped and listed in the result's report. Pairs whose
    two images disagree in size are an error.
    """
    root = Path(root)
    low_dir = root / "low"
    high_dir = root / "high"
    if not low_dir.is_dir() or not high_dir.is_dir():
        raise DataError(f"expected {root}/low and {root}/high directories")

    def listing(d: Path) -> dict[str, Path]:
        return {p.name: p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES}

    lows = listing(low_dir)
    highs = listing(high_dir)
    common = sorted(lows.keys() & highs.keys())
    skipped = sorted(
        [f"low/{n}" for n in lows.keys() - highs.keys()]
        + [f"high/{n}" for n in highs.keys() - lows.keys()]
    )
    if not common:
        raise DataError(f"no matched image pairs under {root}")

    samples = []
    for name in common:
        low = load_image(lows[name])
        high = load_image(highs[name])
        if low.shape != high.shape:
            raise DataError(
                f"pair {name!r} has mismatched dimensions: {low.shape} vs {high.shape}"
            )
        if long_edge is not None:
            low = resize_long_edge(low, long_edge)
            high = resize_long_edge(high, long_edge)
        samples.append(PairedSample(low=low, reference=high, id=Path(name).stem))
    return PairedData(samples, skipped)


def split_dataset(data: PairedData, fraction: float) -> tuple[PairedData, PairedData]:
    """Deterministic split: the first floor(fraction * N) samples train."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n_train = int(np.floor(fraction * len(data)))
    return PairedData(data.samples[:n_train]), PairedData(data.samples[n_train:])


def split_by_file(data: PairedData, path) -> tuple[PairedData, PairedData]:
    """Split by an explicit newline-separated id file: listed ids train."""
    ids = {line.strip() for line in Path(path).read_text().splitlines() if line.strip()}
    listed = [s for s in data if s.id in ids]
    rest = [s for s in data if s.id not in ids]
    return PairedData(listed), PairedData(rest)


def _synth_reference(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    yy = np.linspace(0.0, 1.0, height, dtype=np.float32)[:, None]
    xx = np.linspace(0.0, 1.0, width, dtype=np.float32)[None, :]
    img = np.empty((3, height, width), dtype=np.float32)
    for c in range(3):
        gx, gy = rng.uniform(-0.4, 0.4, size=2)
        base = rng.uniform(0.35, 0.75)
        img[c] = base + gx * (xx - 0.5) + gy * (yy - 0.5)
    for _ in range(rng.integers(2, 6)):
        value = rng.uniform(0.15, 1.0, size=3).astype(np.float32)
        if rng.uniform() < 0.5:
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            r = rng.uniform(0.08, 0.25) * min(height, width)
            inside = (np.arange(height)[:, None] - cy) ** 2 + (
                np.arange(width)[None, :] - cx
            ) ** 2 <= r**2
        else:
            y0 = rng.integers(0, max(1, height - 4))
            x0 = rng.integers(0, max(1, width - 4))
            y1 = rng.integers(y0 + 2, min(height, y0 + max(3, height // 2)) + 1)
            x1 = rng.integers(x0 + 2, min(width, x0 + max(3, width // 2)) + 1)
            inside = np.zeros((height, width), dtype=bool)
            inside[y0:y1, x0:x1] = True
        img[:, inside] = value[:, None]
    return np.clip(img, 0.0, 1.0)


def synth_pairs(
    n: int, height: int, width: int, seed: int, noise_sigma: float = 0.01
) -> PairedData:
    """Generate procedural reference images and gamma-darkened low versions.

    References mix smooth gradients with random rectangles and disks; each
    low image is reference**gamma with gamma ~ U(2, 3) plus optional
    Gaussian noise, clipped to [0, 1]. Bit-deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        ref = _synth_reference(rng, height, width)
        gamma = rng.uniform(2.0, 3.0)
        low = ref**gamma
        if noise_sigma > 0:
            low = low + rng.normal(0.0, noise_sigma, size=low.shape).astype(np.float32)
        low = np.clip(low, 0.0, 1.0).astype(np.float32)
        samples.append(PairedSample(low=low, reference=ref, id=f"synth_{i:04d}"))
    return PairedData(samples)


def save_pairs(data: PairedData, root) -> None:
    """Write a dataset to root/low and root/high as 8-bit PNGs."""
    root = Path(root)
    (root / "low").mkdir(parents=True, exist_ok=True)
    (root / "high").mkdir(parents=True, exist_ok=True)
    for sample in data:
        save_image(sample.low, root / "low" / f"{sample.id}.png")
        save_image(sample.reference, root / "high" / f"{sample.id}.png")
