"""
Corner features: Harris response, normalized-patch descriptors and ratio-test
matching. Matching can search over a few resampling scales of the first image
to bridge the focal-length gap between the two cameras.
"""

from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

from app.imaging.image import to_gray
from app.utils.logging_utils import get_logger

logger = get_logger("align.features")

PATCH_SIZE = 11
RATIO = 0.8
MAX_CORNERS = 400
HARRIS_K = 0.04


def harris_corners(gray: np.ndarray, max_corners: int = MAX_CORNERS, margin: int = PATCH_SIZE // 2) -> np.ndarray:
    """(x, y) integer corner sites, strongest first."""
    ix = ndimage.sobel(gray, axis=1, mode="nearest")
    iy = ndimage.sobel(gray, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, 1.5)
    syy = ndimage.gaussian_filter(iy * iy, 1.5)
    sxy = ndimage.gaussian_filter(ix * iy, 1.5)
    response = sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2
    peak = float(response.max())
    if peak <= 1e-10:
        return np.zeros((0, 2), dtype=np.int64)
    local_max = response == ndimage.maximum_filter(response, size=5, mode="nearest")
    keep = local_max & (response > 0.01 * peak)
    keep[:margin, :] = keep[-margin:, :] = False
    keep[:, :margin] = keep[:, -margin:] = False
    ys, xs = np.nonzero(keep)
    order = np.argsort(-response[ys, xs], kind="stable")[:max_corners]
    return np.stack([xs[order], ys[order]], axis=1)


def describe(gray: np.ndarray, corners: np.ndarray, patch: int = PATCH_SIZE) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-mean, unit-norm patches; flat patches are dropped. Returns (descriptors, kept corners)."""
    half = patch // 2
    descriptors, kept = [], []
    for x, y in corners:
        window = gray[y - half:y + half + 1, x - half:x + half + 1]
        if window.shape != (patch, patch):
            continue
        centered = window - window.mean()
        norm = np.linalg.norm(centered)
        if norm < 1e-8:
            continue
        descriptors.append((centered / norm).ravel())
        kept.append((x, y))
    if not descriptors:
        return np.zeros((0, patch * patch)), np.zeros((0, 2))
    return np.asarray(descriptors), np.asarray(kept, dtype=np.float64)


def ratio_match(desc_a: np.ndarray, desc_b: np.ndarray, ratio: float = RATIO) -> list:
    """(index_a, index_b, score) for matches passing nearest/second-nearest ratio."""
    if len(desc_a) == 0 or len(desc_b) < 2:
        return []
    # unit vectors: squared distance = 2 - 2·cos
    dist = np.sqrt(np.maximum(2.0 - 2.0 * desc_a @ desc_b.T, 0.0))
    matches = []
    for i, row in enumerate(dist):
        nearest = np.argsort(row, kind="stable")[:2]
        best, second = row[nearest[0]], row[nearest[1]]
        if best < ratio * second:
            score = 1.0 - best / second if second > 0 else 1.0
            matches.append((i, int(nearest[0]), float(score)))
    return matches


def _rescale(gray: np.ndarray, scale: float) -> np.ndarray:
    """Resamples so that out[y, x] = gray[y / scale, x / scale]."""
    h, w = gray.shape
    out_h, out_w = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    return ndimage.map_coordinates(gray, [ys / scale, xs / scale], order=1, mode="nearest")


def detect_and_match(a, b, ratio: float = RATIO, scales: Sequence[float] = (1.0,)) -> np.ndarray:
    """
    Correspondences between images a and b as rows (xa, ya, xb, yb, score),
    coordinates in each image's own pixel frame. Empty (0 x 5) when either
    image has no corners.
    """
    gray_a, gray_b = to_gray(a), to_gray(b)
    desc_b, pts_b = describe(gray_b, harris_corners(gray_b))
    rows = []
    for scale in scales:
        scaled = gray_a if scale == 1.0 else _rescale(gray_a, scale)
        desc_a, pts_a = describe(scaled, harris_corners(scaled))
        for i, j, score in ratio_match(desc_a, desc_b, ratio):
            xa, ya = pts_a[i] / scale
            rows.append((xa, ya, pts_b[j][0], pts_b[j][1], score))
    logger.debug(f"{len(rows)} correspondences over scales {tuple(scales)}")
    if not rows:
        return np.zeros((0, 5))
    return np.asarray(rows, dtype=np.float64)
