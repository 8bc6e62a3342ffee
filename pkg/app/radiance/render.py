"""
Volume rendering of colour and disparity, and the masked reconstruction loss.

    w_i = T_i · (1 - exp(-sigma_i·delta_i)),  T_i = exp(-sum_{j<i} sigma_j·delta_j)
    C   = sum_i w_i · c_i
    D   = 1 / sum_i w_i · t_i
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from app.diffcore.tensor import Tensor
from app.radiance.camera import Rays
from app.radiance.field import RadianceField
from app.utils.error_handler import ShapeError
from app.utils.logging_utils import get_logger

logger = get_logger("radiance")

DIV_EPS = 1e-8


def sample_deltas(t: np.ndarray, far) -> np.ndarray:
    """delta_i = t_{i+1} - t_i, with delta_k = far - t_k."""
    t = np.asarray(t, dtype=np.float64)
    far = np.broadcast_to(np.asarray(far, dtype=np.float64), t.shape[:-1])
    return np.concatenate([np.diff(t, axis=-1), (far - t[..., -1])[..., None]], axis=-1)


@dataclass
class RaySampleBatch:
    """Per-ray sample depths t (N x k), intervals delta (N x k), colours (N x k x 3) and densities (N x k)."""
    origins: np.ndarray
    directions: np.ndarray
    t: np.ndarray
    deltas: np.ndarray
    colors: Tensor
    sigmas: Tensor
    eta: Tensor = None

    def __post_init__(self):
        n, k = self.t.shape
        if self.deltas.shape != (n, k) or self.sigmas.shape != (n, k) or self.colors.shape != (n, k, 3):
            raise ShapeError(
                f"inconsistent batch: t {self.t.shape}, delta {self.deltas.shape}, "
                f"sigma {self.sigmas.shape}, color {self.colors.shape}"
            )

    @property
    def num_rays(self) -> int:
        return self.t.shape[0]

    @property
    def num_samples(self) -> int:
        return self.t.shape[1]


def sample_points(rays: Rays, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sample positions o + t·d and matching directions, flattened to (N·k, 3)."""
    t = np.broadcast_to(t, (len(rays), np.shape(t)[-1]))
    points = rays.origins[:, None, :] + t[..., None] * rays.directions[:, None, :]
    directions = np.broadcast_to(rays.directions[:, None, :], points.shape)
    return points.reshape(-1, 3), directions.reshape(-1, 3)


def sample_field(
    field: RadianceField, rays: Rays, t: np.ndarray, far, with_blend: bool = False
) -> RaySampleBatch:
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(rays), np.shape(t)[-1])).copy()
    n, k = t.shape
    points, directions = sample_points(rays, t)
    out = field.query(points, directions, with_blend=with_blend)
    return RaySampleBatch(
        origins=rays.origins,
        directions=rays.directions,
        t=t,
        deltas=sample_deltas(t, far),
        colors=out.color.reshape(n, k, 3),
        sigmas=out.sigma.reshape(n, k),
        eta=out.eta.reshape(n, k) if out.eta is not None else None,
    )


class ColorRender(NamedTuple):
    color: Tensor          # N x 3
    weights: Tensor        # N x k
    transmittance: Tensor  # N, residual after the last sample


def compositing_weights(sigmas, deltas: np.ndarray) -> Tuple[Tensor, Tensor]:
    optical = Tensor.lift(sigmas) * deltas
    transmittance = (-optical.cumsum(axis=1, exclusive=True)).exp()
    weights = transmittance * (1.0 - (-optical).exp())
    residual = (-optical.sum(axis=1)).exp()
    return weights, residual


def volume_render_color(batch: RaySampleBatch) -> ColorRender:
    weights, residual = compositing_weights(batch.sigmas, batch.deltas)
    n, k = weights.shape
    color = (weights.reshape(n, k, 1) * batch.colors).sum(axis=1)
    return ColorRender(color, weights, residual)


def render_disparity(
    weights, t: np.ndarray, far_global: float, eps: float = DIV_EPS
) -> Tuple[Tensor, np.ndarray]:
    """
    D = 1 / sum_i w_i·t_i, clamped to [1/far_global, 1/eps].
    Returns the disparity per ray and a flag for rays whose expected depth
    is below eps (all-transparent rays), which sit at the clamp ceiling.
    """
    weights = weights if isinstance(weights, Tensor) else Tensor(weights)
    expected = (weights * np.asarray(t, dtype=np.float64)).sum(axis=1)
    flagged = expected.data <= eps
    disparity = (1.0 / expected.clamp_min(eps)).clamp_min(1.0 / far_global)
    return disparity, flagged


def recon_loss(pred, target, mask=None) -> Tuple[Tensor, bool]:
    """
    Channel-summed squared error averaged over rays with mask = 1.
    Returns (loss, empty_mask_warning).
    """
    pred = Tensor.lift(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    n = pred.shape[0]
    mask = np.ones(n) if mask is None else np.asarray(mask, dtype=np.float64).reshape(n)
    active = float(mask.sum())
    if active <= 0:
        logger.warning("reconstruction loss over an empty mask; returning 0")
        return Tensor(0.0), True
    # masked targets never reach the tape
    residual = (pred - np.where(mask[:, None] > 0, target, 0.0)) * mask[:, None]
    per_ray = (residual * residual).sum(axis=1)
    return per_ray.sum() * (1.0 / active), False
