"""Stage 2 and stage 3 objectives."""

from typing import Tuple

import numpy as np

from app.bokeh.defocus import BETA, DefocusParams, coc_radius, normalize_map
from app.bokeh.scatter import R_MIN, scatter_render
from app.diffcore.tensor import Tensor
from app.imaging.image import DEFAULT_GAMMA, as_array
from app.imaging.metrics import SSIM_WINDOW, ssim_tensor
from app.radiance.render import recon_loss
from app.utils.error_handler import ShapeError


def focus_loss(
    ultra_patch,
    params: DefocusParams,
    main_patch,
    disparity,
    gamma: float = DEFAULT_GAMMA,
    beta: float = BETA,
    r_min: float = R_MIN,
) -> Tensor:
    """
    1 - SSIM(main patch, bokeh of the ultra-wide patch under r = A·|D_f - D|).

    Patches are P x P x 3 renders of contiguous pixels and `disparity` the
    P x P disparity rendered for them. Only `params` sits on the tape.
    """
    ultra = as_array(ultra_patch.data if isinstance(ultra_patch, Tensor) else ultra_patch)
    main = as_array(main_patch.data if isinstance(main_patch, Tensor) else main_patch)
    disparity = np.asarray(disparity.data if isinstance(disparity, Tensor) else disparity, dtype=np.float64)
    if ultra.shape != main.shape or ultra.shape[:2] != disparity.shape:
        raise ShapeError(f"patch shapes differ: ultra {ultra.shape}, main {main.shape}, disparity {disparity.shape}")
    if min(ultra.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"focus loss needs patches of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {ultra.shape[:2]}")
    bokeh = scatter_render(np.clip(ultra, 0.0, 1.0), coc_radius(params, disparity), gamma, beta, r_min)
    return 1.0 - ssim_tensor(main, bokeh)


def blend_weights(defocus) -> np.ndarray:
    """M_blend: the defocus map normalized to [0, 1] over the whole view."""
    return normalize_map(defocus)


def blend_target(main_colors, ultra_colors, defocus) -> np.ndarray:
    """C_fuse = M·C_w + (1 - M)·C_m, with M = normalize_map(defocus) over the full view."""
    main_colors = np.asarray(main_colors, dtype=np.float64)
    ultra_colors = np.asarray(ultra_colors, dtype=np.float64)
    if main_colors.shape != ultra_colors.shape:
        raise ShapeError(f"main {main_colors.shape} and ultra {ultra_colors.shape} colours differ")
    weights = blend_weights(defocus)
    if weights.shape != main_colors.shape[:-1]:
        raise ShapeError(f"defocus map {weights.shape} does not match colours {main_colors.shape}")
    return main_colors + weights[..., None] * (ultra_colors - main_colors)


def fusion_loss(fused, target, mask=None) -> Tuple[Tensor, bool]:
    """Masked squared error of the fused render, the same convention as recon_loss."""
    return recon_loss(fused, target, mask)
