"""Training and evaluation loops, experiment configs, and checkpoints.

Checkpoints are a single file: an 8-byte magic, a little-endian uint64
header length, a JSON header (config snapshot, epoch/step counters, RNG
states, and a name-indexed weight manifest), then raw little-endian
float32 weight blobs in manifest order.
"""

from __future__ import annotations

import base64
import json
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import Enhancer, ModelConfig
from .data import PairedData, PairedSample, load_paired_dir, split_dataset, synth_pairs
from .losses import LossBreakdown, LossWeights, total_loss
from .masks import RegionMask, derive_band, load_mask, partition, sample_circle
from .metrics import MetricReport, b_curvature_energy, masked_psnr, masked_ssim

CHECKPOINT_MAGIC = b"RANLENC1"
MASK_POLICIES = ("circle", "fixed-file", "derive-band")


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; the offending batch was dumped for inspection."""


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    epochs: int = 300
    max_steps: int | None = None
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    mask_policy: str = "circle"
    mask_file: str | None = None
    band_radius: int = 3
    no_gradient_smooth: bool = False
    data_root: str | None = None
    long_edge: int | None = None
    synth_n: int | None = None
    synth_height: int = 64
    synth_width: int = 64
    val_fraction: float = 0.9
    val_every: int = 10

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if isinstance(self.loss, dict):
            self.loss = LossWeights.from_dict(self.loss)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mask_policy not in MASK_POLICIES:
            raise ValueError(f"mask_policy must be one of {MASK_POLICIES}")

    @classmethod
    def desk_profile(cls, **overrides) -> "TrainConfig":
        """Desk-scale recipe: 64 synthetic 64x64 pairs, 300 steps."""
        base = dict(synth_n=64, synth_height=64, synth_width=64, max_steps=300, seed=0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["model"] = self.model.to_dict()
        d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrainHistory:
    steps: list[dict] = field(default_factory=list)
    validations: list[dict] = field(default_factory=list)


@dataclass
class TrainResult:
    model: Enhancer
    history: TrainHistory
    epochs_run: int
    steps_run: int


@dataclass
class Checkpoint:
    model: Enhancer
    config: TrainConfig
    epoch: int
    step: int
    torch_rng: bytes
    numpy_rng: dict


def _load_configured_data(config: TrainConfig) -> PairedData:
    if config.data_root is not None:
        return load_paired_dir(config.data_root, long_edge=config.long_edge)
    if config.synth_n:
        return synth_pairs(
            config.synth_n, config.synth_height, config.synth_width, config.seed
        )
    raise ValueError("config specifies neither data_root nor synth_n")


def _load_area_file(path) -> np.ndarray:
    with Image.open(path) as img:
        return (np.asarray(img.convert("L")) >= 128).astype(np.uint8)


class _MaskSource:
    """Produces one RegionMask per image according to the mask policy."""

    def __init__(self, config: TrainConfig):
        self.policy = config.mask_policy
        self.fixed: RegionMask | None = None
        if self.policy == "fixed-file":
            if config.mask_file is None:
                raise ValueError("fixed-file mask policy requires mask_file")
            self.fixed = load_mask(config.mask_file)
        elif self.policy == "derive-band":
            if config.mask_file is None:
                raise ValueError("derive-band mask policy requires mask_file")
            area = _load_area_file(config.mask_file)
            self.fixed = derive_band(area, "dilate-out", config.band_radius)

    def __call__(self, height: int, width: int, rng: np.random.Generator) -> RegionMask:
        if self.fixed is not None:
            if (self.fixed.height, self.fixed.width) != (height, width):
                raise ValueError(
                    f"fixed mask is {self.fixed.height}x{self.fixed.width} "
                    f"but the image is {height}x{width}"
                )
            return self.fixed
        mask, _ = sample_circle(height, width, rng)
        return mask


def _areas_from_mask_tensor(mask: torch.Tensor):
    ch0 = mask[:, 0] > 0.5
    ch1 = mask[:, 1] > 0.5
    return ch0, ch1 & ~ch0, ~ch1


def _batches(order: np.ndarray, data: PairedData, batch_size: int):
    by_shape: dict[tuple, list[int]] = defaultdict(list)
    for idx in order:
        by_shape[data[int(idx)].low.shape].append(int(idx))
    for indices in by_shape.values():
        for start in range(0, len(indices), batch_size):
            yield indices[start : start + batch_size]


def _compute_batch_loss(
    model: Enhancer, batch: list[PairedSample], masks: list[RegionMask], config: TrainConfig
) -> tuple[LossBreakdown, torch.Tensor]:
    low = torch.from_numpy(np.stack([s.low for s in batch]))
    ref = torch.from_numpy(np.stack([s.reference for s in batch]))
    mask_arr = np.stack([m.data for m in masks]).astype(np.float32)
    if config.no_gradient_smooth:
        # two-part ablation: the band folds into the kept area, so the
        # reconstruction loss covers everything outside A and L_B drops out
        mask_arr[:, 1] = mask_arr[:, 0]
    mask_t = torch.from_numpy(mask_arr)
    output = model(low, mask_t)
    area_a, area_b, area_c = _areas_from_mask_tensor(mask_t)
    illumination = output.intermediate if output.kind == "retinex" else None
    breakdown = total_loss(
        output.enhanced,
        ref,
        low,
        area_a,
        area_b,
        area_c,
        weights=config.loss,
        illumination=illumination,
    )
    return breakdown, mask_t


def _dump_diverged_batch(batch, masks, dump_dir) -> Path:
    path = Path(dump_dir) / "ranlen_diverged_batch.npz"
    np.savez(
        path,
        low=np.stack([s.low for s in batch]),
        reference=np.stack([s.reference for s in batch]),
        mask=np.stack([m.data for m in masks]),
        ids=np.array([s.id for s in batch]),
    )
    return path


def train(
    config: TrainConfig,
    data: PairedData | None = None,
    checkpoint_path=None,
    log_stream=None,
    dump_dir=".",
) -> TrainResult:
    """Run the training loop and optionally write a checkpoint and JSON logs.

    All randomness (weight init, shuffling, per-image mask sampling) derives
    from config.seed, so identical configs reproduce identical loss curves
    on the same numeric backend.
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if data is None:
        data = _load_configured_data(config)
    train_data, val_data = split_dataset(data, config.val_fraction)
    if len(train_data) == 0:
        train_data = data
    mask_source = _MaskSource(config)
    model = Enhancer(config.model)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history = TrainHistory()

    step = 0
    epoch = 0
    done = False
    for epoch in range(1, config.epochs + 1):
        model.train()
        order = rng.permutation(len(train_data))
        for batch_idx in _batches(order, train_data, config.batch_size):
            batch = [train_data[i] for i in batch_idx]
            masks = [
                mask_source(s.low.shape[1], s.low.shape[2], rng) for s in batch
            ]
            breakdown, _ = _compute_batch_loss(model, batch, masks, config)
            if not torch.isfinite(breakdown.total):
                dump = _dump_diverged_batch(batch, masks, dump_dir)
                raise TrainingDiverged(
                    f"non-finite loss at step {step + 1}; batch dumped to {dump}"
                )
            optimizer.zero_grad()
            breakdown.total.backward()
            optimizer.step()
            step += 1
            row = {
                "kind": "step",
                "step": step,
                "epoch": epoch,
                "total": float(breakdown.total),
                "l_a": float(breakdown.l_a),
                "l_b": float(breakdown.l_b),
                "l_c": float(breakdown.l_c),
            }
            history.steps.append(row)
            if log_stream is not None:
                log_stream.write(json.dumps(row) + "\n")
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break
        if len(val_data) and (epoch % config.val_every == 0 or done or epoch == config.epochs):
            _, summary = evaluate(model, val_data, seed=config.seed)
            row = {"kind": "val", "epoch": epoch, "step": step, **summary}
            history.validations.append(row)
            if log_stream is not None:
                log_stream.write(json.dumps(row) + "\n")
        if done:
            break

    result = TrainResult(model=model, history=history, epochs_run=epoch, steps_run=step)
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path,
            model,
            config,
            epoch=epoch,
            step=step,
            numpy_rng_state=rng.bit_generator.state,
        )
    return result


def evaluate(
    model: Enhancer,
    data: PairedData,
    seed: int = 0,
    mask_policy: str = "circle",
    mask_file: str | None = None,
    band_radius: int = 3,
) -> tuple[list[MetricReport], dict]:
    """Score every image with seed-frozen masks; returns per-image reports + summary."""
    cfg = TrainConfig(
        mask_policy=mask_policy, mask_file=mask_file, band_radius=band_radius
    )
    mask_source = _MaskSource(cfg)
    rng = np.random.default_rng(seed)
    model.eval()
    reports = []
    for sample in data:
        mask = mask_source(sample.low.shape[1], sample.low.shape[2], rng)
        part = partition(mask)
        with torch.no_grad():
            output = model(
                torch.from_numpy(sample.low[None]),
                torch.from_numpy(mask.data[None].astype(np.float32)),
            )
        enhanced = output.enhanced[0].numpy()
        reports.append(
            MetricReport(
                image_id=sample.id,
                psnr_db=masked_psnr(enhanced, sample.reference, part),
                ssim=masked_ssim(enhanced, sample.reference, part),
                r_a=part.r_a,
                curvature_energy=b_curvature_energy(enhanced, part),
            )
        )
    summary = {
        "n_images": len(reports),
        "psnr_db": float(np.mean([r.psnr_db for r in reports])),
        "ssim": float(np.mean([r.ssim for r in reports])),
        "curvature_energy": float(np.mean([r.curvature_energy for r in reports])),
    }
    return reports, summary


def compare_ablation(
    configs: dict[str, TrainConfig],
    data: PairedData | None = None,
    eval_data: PairedData | None = None,
    eval_seed: int = 0,
) -> dict:
    """Train each config on shared data and score them on identical masks.

    Returns one row per config (summary metrics plus per-image curvature
    energies) and flags the run with the smoothest transition band.
    """
    rows = {}
    for label, config in configs.items():
        result = train(config, data=data)
        scored = eval_data if eval_data is not None else (data or _load_configured_data(config))
        reports, summary = evaluate(result.model, scored, seed=eval_seed)
        rows[label] = {
            **summary,
            "per_image_curvature": [r.curvature_energy for r in reports],
            "per_image_psnr": [r.psnr_db for r in reports],
        }
    smoothest = min(rows, key=lambda k: rows[k]["curvature_energy"])
    return {"rows": rows, "smoothest_in_b": smoothest}


def save_checkpoint(
    path,
    model: Enhancer,
    config: TrainConfig,
    epoch: int,
    step: int,
    numpy_rng_state: dict | None = None,
) -> None:
    """Serialize model weights and config into the single-file archive format."""
    manifest = []
    blobs = []
    offset = 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        blob = arr.tobytes()
        manifest.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    numpy_rng = numpy_rng_state or np.random.default_rng(config.seed).bit_generator.state
    header = {
        "format": "ranlen-checkpoint",
        "version": 1,
        "config": config.to_dict(),
        "epoch": epoch,
        "step": step,
        "torch_rng": base64.b64encode(torch.get_rng_state().numpy().tobytes()).decode(),
        "numpy_rng": numpy_rng,
        "manifest": manifest,
    }
    header_bytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the model described by a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a ranlen checkpoint")
    (header_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + header_len].decode())
    payload = raw[16 + header_len :]
    config = TrainConfig.from_dict(header["config"])
    model = Enhancer(config.model)
    state = {}
    for entry in header["manifest"]:
        blob = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(blob, dtype="<f4").reshape(entry["shape"]).copy()
        state[entry["name"]] = torch.from_numpy(arr)
    model.load_state_dict(state)
    model.eval()
    return Checkpoint(
        model=model,
        config=config,
        epoch=header["epoch"],
        step=header["step"],
        torch_rng=base64.b64decode(header["torch_rng"]),
        numpy_rng=header["numpy_rng"],
    )
