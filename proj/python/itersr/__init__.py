"""Python bindings for the itersr restoration toolkit."""

from ._core import (
    Error,
    ToyWorld,
    TrainedModel,
    balanced_weight,
    color_correct,
    degrade,
    derive_seed,
    forward_mask,
    gamma,
    neighbor_agreement,
    psnr,
    run,
    select_start_step,
    ssim,
    start_step_for_count,
    unmask_count,
)

__all__ = [
    "Error",
    "ToyWorld",
    "TrainedModel",
    "balanced_weight",
    "color_correct",
    "degrade",
    "derive_seed",
    "forward_mask",
    "gamma",
    "neighbor_agreement",
    "psnr",
    "run",
    "select_start_step",
    "ssim",
    "start_step_for_count",
    "unmask_count",
]
