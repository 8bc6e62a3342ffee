"""
All-in-focus inference and the depth-of-field applications built on it.

Disparities handed to the defocus model are axial (1 / camera-space depth),
the convention of the generator's disparity maps: the volume-rendered value
1 / sum w·t is taken along the ray and divided by the ray's axial cosine.
"""

from typing import NamedTuple

import numpy as np

from app.bokeh.defocus import defocus_map
from app.bokeh.scatter import scatter_render
from app.fusion.render import fused_volume_render
from app.fusion.scene import FusedScene, no_grad
from app.imaging.image import DEFAULT_GAMMA, Image
from app.radiance.camera import CameraModel, Rays, generate_rays, pixel_grid
from app.radiance.render import render_disparity, sample_field, volume_render_color
from app.radiance.sampling import stratified_sample
from app.utils.error_handler import ParameterError
from app.utils.logging_utils import get_logger

logger = get_logger("fusion.inference")

RENDER_CHUNK = 4096


class ViewRender(NamedTuple):
    fused: np.ndarray            # H x W x 3, clipped to [0, 1]
    main: np.ndarray             # H x W x 3, main field alone
    ultra: np.ndarray            # H x W x 3, ultra-wide field alone
    disparity_main: np.ndarray   # H x W axial disparity from the main field's weights
    disparity_fused: np.ndarray  # H x W axial disparity from the fused weights
    blend: np.ndarray            # H x W, eta composited with the main field's weights


def render_rays(scene: FusedScene, rays: Rays, chunk: int = RENDER_CHUNK) -> dict:
    """Deterministic (bin-center) render of `rays`; arrays keyed like ViewRender."""
    outputs = {key: [] for key in ViewRender._fields}
    with no_grad(scene):
        for start in range(0, len(rays), chunk):
            part = rays.subset(slice(start, start + chunk))
            t = stratified_sample(scene.near, scene.far, scene.samples, jitter=False,
                                  n_rays=len(part), lindisp=scene.lindisp)
            main = sample_field(scene.main, part, t, scene.far, with_blend=True)
            ultra = sample_field(scene.ultra, part, t, scene.far)
            main_render = volume_render_color(main)
            fused = fused_volume_render(main, ultra)

            alpha_m = 1.0 - np.exp(-main.sigmas.data * main.deltas)
            alpha_w = 1.0 - np.exp(-ultra.sigmas.data * ultra.deltas)
            eta = main.eta.data
            fused_weights = fused.transmittance.data * (eta * alpha_w + (1.0 - eta) * alpha_m)
            disp_main, _ = render_disparity(main_render.weights.data, t, scene.far)
            disp_fused, _ = render_disparity(fused_weights, t, scene.far)

            outputs["fused"].append(np.clip(fused.color.data, 0.0, 1.0))
            outputs["main"].append(np.clip(main_render.color.data, 0.0, 1.0))
            outputs["ultra"].append(np.clip(volume_render_color(ultra).color.data, 0.0, 1.0))
            outputs["disparity_main"].append(disp_main.data / part.axial)
            outputs["disparity_fused"].append(disp_fused.data / part.axial)
            outputs["blend"].append((main_render.weights.data * eta).sum(axis=1))
    return {key: np.concatenate(values, axis=0) for key, values in outputs.items()}


def render_outputs(scene: FusedScene, cam: CameraModel, chunk: int = RENDER_CHUNK) -> ViewRender:
    flat = render_rays(scene, generate_rays(cam, pixel_grid(cam)), chunk)
    h, w = cam.height, cam.width
    return ViewRender(**{
        key: value.reshape((h, w, 3) if value.ndim == 2 else (h, w)) for key, value in flat.items()
    })


def render_aif(scene: FusedScene, cam: CameraModel) -> Image:
    """Fused render of every pixel of `cam`, jitter off."""
    return Image(render_outputs(scene, cam).fused)


def render_main_only(scene: FusedScene, cam: CameraModel) -> Image:
    """The stage-1 main field alone: the single-camera baseline."""
    return Image(render_outputs(scene, cam).main)


def render_blend_mask(scene: FusedScene, cam: CameraModel) -> Image:
    """eta alpha-composited with the main field's weights; for inspection only."""
    return Image(np.clip(render_outputs(scene, cam).blend, 0.0, 1.0))


def render_defocus_map(scene: FusedScene, cam: CameraModel) -> np.ndarray:
    """A·|D - D_f| with the learned parameters over the fused disparity."""
    return defocus_map(scene.defocus, render_outputs(scene, cam).disparity_fused).data


def refocus_radius(disparity: np.ndarray, A_user: float, Df_user: float) -> np.ndarray:
    if A_user < 0:
        raise ParameterError(f"aperture must be >= 0, got {A_user}")
    return A_user * np.abs(Df_user - disparity)


def split_diopter_radius(disparity: np.ndarray, A_user: float, Df_near: float, Df_far: float) -> np.ndarray:
    """A·min(|D - Df_near|, |D - Df_far|); Df_near must not lie behind Df_far."""
    if A_user < 0:
        raise ParameterError(f"aperture must be >= 0, got {A_user}")
    if Df_near < Df_far:
        raise ParameterError(f"near focus ({Df_near}) must have the larger disparity than far focus ({Df_far})")
    return A_user * np.minimum(np.abs(Df_near - disparity), np.abs(Df_far - disparity))


def _bokeh(aif: np.ndarray, radius: np.ndarray, gamma: float) -> Image:
    return scatter_render(Image(aif), radius, gamma)


def refocus(scene: FusedScene, cam: CameraModel, A_user: float, Df_user: float, gamma: float = DEFAULT_GAMMA) -> Image:
    out = render_outputs(scene, cam)
    return _bokeh(out.fused, refocus_radius(out.disparity_fused, A_user, Df_user), gamma)


def split_diopter(
    scene: FusedScene,
    cam: CameraModel,
    A_user: float,
    Df_near: float,
    Df_far: float,
    gamma: float = DEFAULT_GAMMA,
) -> Image:
    out = render_outputs(scene, cam)
    return _bokeh(out.fused, split_diopter_radius(out.disparity_fused, A_user, Df_near, Df_far), gamma)
