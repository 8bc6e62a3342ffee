"""
Laplacian focus measure and two-image multi-focus fusion for ground truth.

The fusion mask follows the guided-filter recipe: a binary focus decision,
small decision islands folded into their surroundings, then an edge-aware
refinement guided by the initial fused image.
"""

from typing import Tuple

import numpy as np
from scipy import ndimage

from app.imaging.image import Image
from app.utils.error_handler import ShapeError

FOCUS_SMOOTH_RADIUS = 4
RESPONSE_CAP_PERCENTILE = 90.0
GUIDE_RADIUS = 2
GUIDE_EPS = 1e-3
# decision regions smaller than this fraction of the image are flipped
MIN_REGION_FRACTION = 0.01


def box_smooth(values: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.uniform_filter(values, size=2 * radius + 1, mode="nearest")


def laplacian_response(img: Image) -> np.ndarray:
    return np.abs(ndimage.laplace(img.gray(), mode="nearest"))


def focus_measure(img: Image) -> np.ndarray:
    """|Laplacian| of the grayscale image, box-smoothed with radius 4."""
    return np.maximum(box_smooth(laplacian_response(img), FOCUS_SMOOTH_RADIUS), 0.0)


def focus_decision(fg: Image, bg: Image) -> np.ndarray:
    """
    True where fg is the sharper input. Both Laplacian responses are capped
    at a shared high percentile before windowing, so a few strong steps
    (occlusion edges sharp in one input) cannot outvote the texture of the
    neighbouring surface.
    """
    resp_fg, resp_bg = laplacian_response(fg), laplacian_response(bg)
    cap = np.percentile(np.concatenate([resp_fg.ravel(), resp_bg.ravel()]), RESPONSE_CAP_PERCENTILE)
    if cap > 0:
        resp_fg, resp_bg = np.minimum(resp_fg, cap), np.minimum(resp_bg, cap)
    return box_smooth(resp_fg, FOCUS_SMOOTH_RADIUS) >= box_smooth(resp_bg, FOCUS_SMOOTH_RADIUS)


def remove_small_regions(decision: np.ndarray, min_area: int) -> np.ndarray:
    """Flips connected regions of either label with fewer than `min_area` pixels."""
    out = decision.copy()
    for label in (True, False):
        regions, count = ndimage.label(out == label)
        if count == 0:
            continue
        sizes = np.bincount(regions.ravel())
        small = sizes < min_area
        small[0] = False
        # never flip the whole image
        if small[1:].all():
            continue
        out[small[regions]] = not label
    return out


def guided_filter(src: np.ndarray, guide: np.ndarray, radius: int = GUIDE_RADIUS, eps: float = GUIDE_EPS) -> np.ndarray:
    """Edge-preserving smoothing of `src` by a local linear model of `guide` (both H x W)."""
    mean_i = box_smooth(guide, radius)
    mean_p = box_smooth(src, radius)
    cov_ip = box_smooth(guide * src, radius) - mean_i * mean_p
    var_i = box_smooth(guide * guide, radius) - mean_i * mean_i
    a = cov_ip / (np.maximum(var_i, 0.0) + eps)
    b = mean_p - a * mean_i
    return box_smooth(a, radius) * guide + box_smooth(b, radius)


def multifocus_fuse(fg: Image, bg: Image) -> Tuple[np.ndarray, Image]:
    """
    M_fuse from the capped focus comparison, cleaned of small islands and
    refined with a guided filter; I_gt = M·fg + (1 - M)·bg.
    Returns the mask (H x W, values in [0,1]) and the fused image.
    """
    if fg.shape != bg.shape:
        raise ShapeError(f"multifocus_fuse shape mismatch: {fg.shape} vs {bg.shape}")
    h, w = fg.shape[:2]
    decision = focus_decision(fg, bg)
    decision = remove_small_regions(decision, max(1, int(MIN_REGION_FRACTION * h * w)))

    selection = decision.astype(np.float64)
    initial = bg.data + selection[..., None] * (fg.data - bg.data)
    guide = initial.mean(axis=2)
    mask = np.clip(guided_filter(selection, guide), 0.0, 1.0)
    fused = bg.data + mask[..., None] * (fg.data - bg.data)
    return mask, Image.clipped(fused, fg.encoding)
