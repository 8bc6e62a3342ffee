"""Fused rendering of the two fields, the three training stages and all-in-focus inference."""

from app.fusion.inference import (
    ViewRender,
    refocus,
    render_aif,
    render_blend_mask,
    render_defocus_map,
    render_main_only,
    render_outputs,
    split_diopter,
)
from app.fusion.losses import blend_target, focus_loss, fusion_loss
from app.fusion.render import FusedRender, fused_volume_render
from app.fusion.scene import FusedScene, no_grad
from app.fusion.trainer import (
    TrainOptions,
    TrainingData,
    fit_defocus,
    load_training_data,
    run_stage,
    train_stage1,
    train_stage2,
    train_stage3,
)

__all__ = [
    "FusedRender", "FusedScene", "TrainOptions", "TrainingData", "ViewRender",
    "blend_target", "fit_defocus", "focus_loss", "fused_volume_render", "fusion_loss", "load_training_data",
    "no_grad", "refocus", "render_aif", "render_blend_mask", "render_defocus_map", "render_main_only",
    "render_outputs", "run_stage", "split_diopter", "train_stage1", "train_stage2", "train_stage3",
]
