"""Region-aware normalization toolkit for local low-light image enhancement."""

from .backbones import (
    EnhancementOutput,
    Enhancer,
    ModelConfig,
    RefinementTail,
    apply_curve,
    apply_degree,
)
from .data import PairedData, PairedSample, load_paired_dir, resize_long_edge, synth_pairs
from .losses import LossBreakdown, LossWeights, gradient_smooth_loss, loss_area_a, loss_area_c, total_loss
from .masks import (
    AreaPartition,
    CircleSpec,
    RegionMask,
    derive_band,
    load_mask,
    partition,
    rasterize_circle,
    sample_circle,
    save_mask,
)
from .metrics import MetricReport, b_curvature_energy, masked_psnr, masked_ssim
from .norm import ChannelNorm, ModulationField, RanlenNorm
from .trainer import (
    Checkpoint,
    TrainConfig,
    TrainResult,
    compare_ablation,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AreaPartition",
    "ChannelNorm",
    "Checkpoint",
    "CircleSpec",
    "EnhancementOutput",
    "Enhancer",
    "LossBreakdown",
    "LossWeights",
    "MetricReport",
    "ModelConfig",
    "ModulationField",
    "PairedData",
    "PairedSample",
    "RanlenNorm",
    "RefinementTail",
    "RegionMask",
    "TrainConfig",
    "TrainResult",
    "apply_curve",
    "apply_degree",
    "b_curvature_energy",
    "compare_ablation",
    "derive_band",
    "evaluate",
    "gradient_smooth_loss",
    "load_checkpoint",
    "load_mask",
    "load_paired_dir",
    "loss_area_a",
    "loss_area_c",
    "masked_psnr",
    "masked_ssim",
    "partition",
    "rasterize_circle",
    "resize_long_edge",
    "sample_circle",
    "save_checkpoint",
    "save_mask",
    "synth_pairs",
    "total_loss",
    "train",
]
