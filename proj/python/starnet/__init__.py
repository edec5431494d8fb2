"""Single-image desnowing network (C++ core)."""

from ._core import (
    CheckpointError,
    ConfigError,
    IngestionError,
    Model,
    ParameterError,
    ShapeError,
    Vgg16Features,
    channel_shuffle,
    load_manifest,
    lr_at_epoch,
    procedural_clean,
    psnr,
    smooth_l1,
    ssim,
    synthesize_pair,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "IngestionError",
    "Model",
    "ParameterError",
    "ShapeError",
    "Vgg16Features",
    "channel_shuffle",
    "load_manifest",
    "lr_at_epoch",
    "procedural_clean",
    "psnr",
    "smooth_l1",
    "ssim",
    "synthesize_pair",
]
