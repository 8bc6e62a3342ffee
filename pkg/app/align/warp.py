"""Backward warping with bilinear sampling and an explicit validity plane."""

from typing import Tuple

import numpy as np
from scipy import ndimage

from app.imaging.image import Image
from app.utils.error_handler import ShapeError

_EDGE_TOLERANCE = 1e-9


def sample_bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray, mode: str = "constant") -> Tuple[np.ndarray, np.ndarray]:
    """
    Samples H x W (x C) `data` at real coordinates; out-of-bounds samples are 0
    (mode="constant") and flagged False in the returned validity array.
    """
    data = np.asarray(data, dtype=np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[..., None]
    h, w = data.shape[:2]
    valid = (
        (xs >= -_EDGE_TOLERANCE) & (xs <= w - 1 + _EDGE_TOLERANCE)
        & (ys >= -_EDGE_TOLERANCE) & (ys <= h - 1 + _EDGE_TOLERANCE)
    )
    # snap round-off just past the border back onto it
    xs = np.where(valid, np.clip(xs, 0.0, w - 1), xs)
    ys = np.where(valid, np.clip(ys, 0.0, h - 1), ys)
    coords = np.stack([ys, xs])
    channels = [
        ndimage.map_coordinates(data[..., c], coords, order=1, mode=mode, cval=0.0)
        for c in range(data.shape[2])
    ]
    values = np.stack(channels, axis=-1)
    if mode == "constant":
        values = values * valid[..., None]
    return (values[..., 0] if squeeze else values), valid


def warp_homography(img: Image, homography, out_shape=None) -> Tuple[Image, np.ndarray]:
    """
    out(p) = img(H^-1 · p), where H maps source pixel coordinates to output
    coordinates. Returns the warped image and its validity mask.
    """
    out_h, out_w = (out_shape or img.shape)[:2]
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    src_x, src_y = homography.inverse().apply_xy(xs, ys)
    values, valid = sample_bilinear(img.data, src_x, src_y)
    return Image.clipped(values, img.encoding), valid


def warp_flow(img: Image, flow: np.ndarray) -> Tuple[Image, np.ndarray]:
    """out(p) = img(p + flow(p)), flow in pixels as (dx, dy)."""
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape != img.shape[:2] + (2,):
        raise ShapeError(f"flow {flow.shape} does not match image {img.shape}")
    ys, xs = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    values, valid = sample_bilinear(img.data, xs + flow[..., 0], ys + flow[..., 1])
    return Image.clipped(values, img.encoding), valid
