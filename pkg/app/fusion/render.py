"""
Fused volume rendering of the main and ultra-wide fields.

Per sample i the emitted colour blends the two fields with the weight eta
predicted by the main field's blend head (eta is the ultra-wide weight):

    volume_i = eta_i·(1 - exp(-sigma_w·delta_i))·c_w + (1 - eta_i)·(1 - exp(-sigma_m·delta_i))·c_m
    T_f(i)   = exp(-sum_{j<i} sigma_m,j·sigma_w,j·delta_j)
    C_f      = sum_i T_f(i)·volume_i
"""

from typing import NamedTuple

import numpy as np

from app.diffcore.tensor import Tensor
from app.radiance.render import RaySampleBatch
from app.utils.error_handler import ShapeError

DENSITY_PRODUCT_CLAMP = 1e4


class FusedRender(NamedTuple):
    color: Tensor          # N x 3
    transmittance: Tensor  # N x k, T_f per sample


def fused_volume_render(main: RaySampleBatch, ultra: RaySampleBatch, eta=None) -> FusedRender:
    """
    `eta` defaults to the blend values carried by the main batch. Both
    batches must be sampled at the same depths along the same rays.
    """
    if main.t.shape != ultra.t.shape or not np.array_equal(main.t, ultra.t):
        raise ShapeError("main and ultra-wide samples must share depths t_i")
    eta = main.eta if eta is None else eta
    if eta is None:
        raise ShapeError("fused rendering needs eta; sample the main field with its blend head")
    eta = Tensor.lift(eta)
    n, k = main.t.shape
    if eta.shape != (n, k):
        raise ShapeError(f"eta must be {(n, k)}, got {eta.shape}")

    deltas = main.deltas
    sigma_m, sigma_w = Tensor.lift(main.sigmas), Tensor.lift(ultra.sigmas)
    product = (sigma_m * sigma_w).clamp_max(DENSITY_PRODUCT_CLAMP)
    transmittance = (-(product * deltas).cumsum(axis=1, exclusive=True)).exp()

    alpha_m = 1.0 - (-(sigma_m * deltas)).exp()
    alpha_w = 1.0 - (-(sigma_w * deltas)).exp()
    emit_w = (eta * alpha_w).reshape(n, k, 1) * ultra.colors
    emit_m = ((1.0 - eta) * alpha_m).reshape(n, k, 1) * main.colors
    color = (transmittance.reshape(n, k, 1) * (emit_w + emit_m)).sum(axis=1)
    return FusedRender(color, transmittance)
