"""
Dense coarse-to-fine Lucas-Kanade flow and forward-backward confidence.

A flow F estimated by pyramid_flow(src, dst) satisfies src(p) ≈ dst(p + F(p));
warp_flow(dst, F) therefore brings dst into the src frame.
"""

import numpy as np
from scipy import ndimage

from app.align.warp import sample_bilinear
from app.imaging.image import to_gray
from app.utils.error_handler import ShapeError

FLOW_LEVELS = 4
FLOW_ITERS = 10
FLOW_WINDOW = 5
FLOW_DAMPING = 1e-3
CONFIDENCE_T = 1.0
_MAX_STEP_PX = 2.0

# H x W x 2 displacements (dx, dy) in pixels
FlowField = np.ndarray


def check_flow(flow: np.ndarray, shape=None) -> np.ndarray:
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ShapeError(f"flow must be H x W x 2, got {flow.shape}")
    if shape is not None and flow.shape[:2] != tuple(shape[:2]):
        raise ShapeError(f"flow {flow.shape[:2]} does not match image {tuple(shape[:2])}")
    if not np.all(np.isfinite(flow)):
        raise ShapeError("flow has non-finite displacements")
    return flow


def _pyramid(gray: np.ndarray, levels: int) -> list:
    pyramid = [gray]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        if min(prev.shape) < 8:
            break
        pyramid.append(ndimage.gaussian_filter(prev, 1.0, mode="nearest")[::2, ::2])
    return pyramid


def _upsample_flow(flow: np.ndarray, shape) -> np.ndarray:
    """Coarse pixel i sits at fine pixel 2i; displacements double."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [ys / 2.0, xs / 2.0]
    return np.stack(
        [2.0 * ndimage.map_coordinates(flow[..., c], coords, order=1, mode="nearest") for c in range(2)],
        axis=-1,
    )


def _lk_level(src: np.ndarray, dst: np.ndarray, flow: np.ndarray, iters: int, window: int, damping: float) -> np.ndarray:
    h, w = src.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(iters):
        warped, _ = sample_bilinear(dst, xs + flow[..., 0], ys + flow[..., 1], mode="nearest")
        gy, gx = np.gradient(warped)
        it = warped - src
        sxx = ndimage.uniform_filter(gx * gx, window, mode="nearest")
        syy = ndimage.uniform_filter(gy * gy, window, mode="nearest")
        sxy = ndimage.uniform_filter(gx * gy, window, mode="nearest")
        bx = -ndimage.uniform_filter(gx * it, window, mode="nearest")
        by = -ndimage.uniform_filter(gy * it, window, mode="nearest")
        # Tikhonov-damped 2x2 solve; flat regions fall back to zero update
        a, d = sxx + damping, syy + damping
        det = a * d - sxy * sxy
        du = (d * bx - sxy * by) / det
        dv = (a * by - sxy * bx) / det
        step = np.clip(np.stack([du, dv], axis=-1), -_MAX_STEP_PX, _MAX_STEP_PX)
        flow = flow + step
    return flow


def pyramid_flow(
    src,
    dst,
    levels: int = FLOW_LEVELS,
    iters: int = FLOW_ITERS,
    window: int = FLOW_WINDOW,
    damping: float = FLOW_DAMPING,
) -> FlowField:
    """Flow F with src(p) ≈ dst(p + F(p)), estimated coarse to fine."""
    if levels < 1:
        raise ShapeError(f"levels must be >= 1, got {levels}")
    gray_src, gray_dst = to_gray(src), to_gray(dst)
    if gray_src.shape != gray_dst.shape:
        raise ShapeError(f"flow images differ in size: {gray_src.shape} vs {gray_dst.shape}")
    pyr_src, pyr_dst = _pyramid(gray_src, levels), _pyramid(gray_dst, levels)
    depth = min(len(pyr_src), len(pyr_dst))
    flow = np.zeros(pyr_src[depth - 1].shape + (2,))
    for level in reversed(range(depth)):
        if flow.shape[:2] != pyr_src[level].shape:
            flow = _upsample_flow(flow, pyr_src[level].shape)
        flow = _lk_level(pyr_src[level], pyr_dst[level], flow, iters, window, damping)
    return flow


def fb_roundtrip_error(fwd: FlowField, bwd: FlowField) -> np.ndarray:
    """|| q + bwd(q) - p || with q = p + fwd(p); bwd is sampled bilinearly at q."""
    fwd = check_flow(fwd)
    bwd = check_flow(bwd, fwd.shape)
    h, w = fwd.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    qx, qy = xs + fwd[..., 0], ys + fwd[..., 1]
    back, _ = sample_bilinear(bwd, qx, qy, mode="nearest")
    return np.hypot(qx + back[..., 0] - xs, qy + back[..., 1] - ys)


def fb_confidence(fwd: FlowField, bwd: FlowField, t: float = CONFIDENCE_T) -> np.ndarray:
    """Binary mask: t · round-trip error <= 1.0."""
    return (t * fb_roundtrip_error(fwd, bwd)) <= 1.0
