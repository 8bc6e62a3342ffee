"""Synthetic dual-camera scenes: analytic renders, camera degradations, dataset emission."""

from app.scenegen.dataset import GeneratorOptions, camera_arc, emit_dataset, split_views
from app.scenegen.degrade import ColorCurve, simulate_main, simulate_ultra
from app.scenegen.scene import SceneRender, build_scene, render_aif, render_layers, texture_patch

__all__ = [
    "ColorCurve", "GeneratorOptions", "SceneRender",
    "build_scene", "camera_arc", "emit_dataset", "render_aif", "render_layers",
    "simulate_main", "simulate_ultra", "split_views", "texture_patch",
]
