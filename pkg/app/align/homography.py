"""
Homography estimation: normalized 4-point DLT inside seeded RANSAC, refit on
the inliers of the best consensus.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import linalg

from app.utils.error_handler import EstimationError, ParameterError
from app.utils.logging_utils import get_logger

logger = get_logger("align.homography")

RANSAC_ITERS = 2000
INLIER_TOL_PX = 3.0
_DEGENERATE_AREA = 1e-6


@dataclass(frozen=True)
class Homography:
    """3x3 matrix mapping source pixel coordinates to target coordinates; H[2,2] = 1."""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ParameterError("homography must be a finite 3x3 matrix")
        if abs(m[2, 2]) < 1e-15:
            raise EstimationError("homography cannot be normalized (H[2,2] = 0)")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise EstimationError("homography is singular")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        x, y = self.apply_xy(points[:, 0], points[:, 1])
        return np.stack([x, y], axis=1)

    def apply_xy(self, xs: np.ndarray, ys: np.ndarray):
        m = self.matrix
        w = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
        w = np.where(np.abs(w) < 1e-12, 1e-12, w)
        return (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / w, (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / w

    def corner_error(self, other: "Homography", width: int, height: int) -> float:
        """Max distance between the images of the frame corners under both maps."""
        corners = np.array([[0, 0], [width - 1, 0], [0, height - 1], [width - 1, height - 1]], dtype=np.float64)
        return float(np.max(np.linalg.norm(self.apply(corners) - other.apply(corners), axis=1)))

    def to_list(self) -> list:
        return [float(v) for v in self.matrix.ravel()]


def _normalizer(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    spread = np.mean(np.linalg.norm(points - centroid, axis=1))
    scale = np.sqrt(2.0) / spread if spread > 1e-12 else 1.0
    return np.array([[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]])


def _homogeneous(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.ones((len(points), 1))])


def fit_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares DLT with Hartley normalization; src, dst are (N, 2), N >= 4."""
    t_src, t_dst = _normalizer(src), _normalizer(dst)
    a = (_homogeneous(src) @ t_src.T)[:, :2]
    b = (_homogeneous(dst) @ t_dst.T)[:, :2]
    rows = []
    for (x, y), (u, v) in zip(a, b):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, _, vt = linalg.svd(np.asarray(rows))
    h = vt[-1].reshape(3, 3)
    return np.linalg.inv(t_dst) @ h @ t_src


def _is_degenerate(points: np.ndarray) -> bool:
    """True when any three of the points are (nearly) collinear."""
    for i, j, k in combinations(range(len(points)), 3):
        d1, d2 = points[j] - points[i], points[k] - points[i]
        if abs(d1[0] * d2[1] - d1[1] * d2[0]) < _DEGENERATE_AREA:
            return True
    return False


def reprojection_error(matrix: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    projected = _homogeneous(src) @ matrix.T
    w = projected[:, 2:3]
    w = np.where(np.abs(w) < 1e-12, 1e-12, w)
    return np.linalg.norm(projected[:, :2] / w - dst, axis=1)


def estimate_homography_ransac(
    matches: np.ndarray,
    iters: int = RANSAC_ITERS,
    inlier_tol_px: float = INLIER_TOL_PX,
    seed: int = 0,
) -> Homography:
    """
    Best-consensus homography from (xa, ya, xb, yb[, score]) rows mapping a -> b.
    Matches are put in canonical order first so the result does not depend on
    list order for a fixed seed; ties keep the earliest trial.
    """
    matches = np.asarray(matches, dtype=np.float64)
    if matches.ndim != 2 or len(matches) < 4:
        raise EstimationError(f"need at least 4 correspondences, got {len(matches)}")
    order = np.lexsort(matches[:, :4].T[::-1])
    matches = matches[order]
    src, dst = matches[:, 0:2], matches[:, 2:4]

    rng = np.random.default_rng(seed)
    best_count, best_inliers = -1, None
    for _ in range(iters):
        sample = rng.choice(len(matches), size=4, replace=False)
        if _is_degenerate(src[sample]) or _is_degenerate(dst[sample]):
            continue
        candidate = fit_dlt(src[sample], dst[sample])
        if not np.all(np.isfinite(candidate)) or abs(candidate[2, 2]) < 1e-15:
            continue
        inliers = reprojection_error(candidate / candidate[2, 2], src, dst) < inlier_tol_px
        count = int(inliers.sum())
        if count > best_count:
            best_count, best_inliers = count, inliers

    if best_inliers is None or best_count < 4:
        raise EstimationError("all minimal samples were degenerate; cannot estimate a homography")

    # refit on inliers until the consensus settles
    inliers = best_inliers
    matrix = fit_dlt(src[inliers], dst[inliers])
    for _ in range(3):
        refreshed = reprojection_error(matrix / matrix[2, 2], src, dst) < inlier_tol_px
        if refreshed.sum() < 4 or np.array_equal(refreshed, inliers):
            break
        inliers = refreshed
        matrix = fit_dlt(src[inliers], dst[inliers])
    logger.debug(f"RANSAC consensus: {int(inliers.sum())}/{len(matches)} inliers")
    return Homography(matrix)
