"""
Scatter-based bokeh rendering.

Each source pixel x spreads its linear radiance I_g(x) onto the targets at
offset e with weight K_x(e) = H(r_x - |e|) / max(r_x, r_min)^2, restricted to
|e| < ceil(r_x) + 1. Targets divide by the accumulated weight, then the result
is returned to display encoding. The vectorized path walks the offsets of the
largest window and shifts whole planes, so it is differentiable wrt the radius
map through the tape.
"""

import math
from typing import Union

import numpy as np

from app.bokeh.defocus import BETA, smooth_heaviside
from app.diffcore.tensor import Tensor, shift2d
from app.imaging.image import DEFAULT_GAMMA, Image
from app.utils.error_handler import ParameterError, ShapeError

R_MIN = 0.5
_LINEAR_FLOOR = 1e-16


def _support_reach(radius: np.ndarray) -> np.ndarray:
    return np.ceil(radius) + 1.0


def _prepare(sharp, radius):
    if isinstance(sharp, Image):
        if sharp.encoding != "display":
            raise ParameterError("scatter_render expects a display-encoded image")
        sharp_t = Tensor(sharp.data)
    else:
        sharp_t = Tensor.lift(sharp)
    radius_t = Tensor.lift(radius)
    if sharp_t.ndim == 2:
        sharp_t = sharp_t.reshape(sharp_t.shape + (1,))
    if sharp_t.ndim != 3 or radius_t.shape != sharp_t.shape[:2]:
        raise ShapeError(f"radius map {radius_t.shape} does not match image {sharp_t.shape}")
    if np.any(radius_t.data < 0) or not np.all(np.isfinite(radius_t.data)):
        raise ParameterError("blur radius map must be finite and >= 0")
    return sharp_t, radius_t


def scatter_render(
    sharp,
    radius,
    gamma: float = DEFAULT_GAMMA,
    beta: float = BETA,
    r_min: float = R_MIN,
) -> Union[Image, Tensor]:
    """
    Bokeh of `sharp` (display-encoded, H x W x C) under the per-pixel radius map.

    Returns an Image for plain inputs, or a Tensor on the tape when either
    input is a Tensor.
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")
    on_tape = isinstance(sharp, Tensor) or isinstance(radius, Tensor)
    sharp_t, radius_t = _prepare(sharp, radius)
    h, w, c = sharp_t.shape

    linear = sharp_t ** gamma
    reach = _support_reach(radius_t.data)
    extent = int(math.ceil(float(radius_t.data.max()))) + 1
    inv_area = 1.0 / (radius_t.clamp_min(r_min) ** 2)

    numerator = None
    denominator = None
    for dy in range(-extent, extent + 1):
        for dx in range(-extent, extent + 1):
            distance = math.hypot(dy, dx)
            support = distance < reach
            if not support.any():
                continue
            weight = smooth_heaviside(radius_t - distance, beta) * inv_area * support
            contribution = shift2d(linear * weight.reshape(h, w, 1), dy, dx)
            spread = shift2d(weight, dy, dx)
            numerator = contribution if numerator is None else numerator + contribution
            denominator = spread if denominator is None else denominator + spread

    blurred = (numerator / denominator.reshape(h, w, 1)).clamp_min(_LINEAR_FLOOR) ** (1.0 / gamma)
    if on_tape:
        return blurred
    return Image.clipped(blurred.data, "display")


def scatter_render_reference(
    sharp: np.ndarray,
    radius: np.ndarray,
    gamma: float = DEFAULT_GAMMA,
    beta: float = BETA,
    r_min: float = R_MIN,
) -> np.ndarray:
    """Per-source double loop over the same kernel; the oracle for scatter_render."""
    sharp = sharp.data if isinstance(sharp, Image) else np.asarray(sharp, dtype=np.float64)
    if sharp.ndim == 2:
        sharp = sharp[..., None]
    radius = np.asarray(radius, dtype=np.float64)
    h, w, _ = sharp.shape
    linear = sharp ** gamma
    numerator = np.zeros_like(linear)
    denominator = np.zeros((h, w))
    for sy in range(h):
        for sx in range(w):
            r = radius[sy, sx]
            reach = math.ceil(r) + 1
            area = max(r, r_min) ** 2
            for ty in range(max(0, sy - reach), min(h, sy + reach + 1)):
                for tx in range(max(0, sx - reach), min(w, sx + reach + 1)):
                    distance = math.hypot(ty - sy, tx - sx)
                    if distance >= reach:
                        continue
                    k = (0.5 + 0.5 * math.tanh(beta * (r - distance))) / area
                    numerator[ty, tx] += k * linear[sy, sx]
                    denominator[ty, tx] += k
    return np.maximum(numerator / denominator[..., None], _LINEAR_FLOOR) ** (1.0 / gamma)
