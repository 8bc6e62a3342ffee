"""
Thin-lens defocus model: r = A·|D_f - D| in disparity space.

A (blur intensity) is kept non-negative through a softplus reparameterization;
D_f (focal disparity) is unconstrained.
"""

import math
from typing import Union

import numpy as np

from app.diffcore.params import ParamStore
from app.diffcore.tensor import Tensor
from app.utils.error_handler import NumericError, ParameterError

A_INIT = 5.0
DF_INIT = 0.5
BETA = 4.0

# softplus(-1000) underflows to exactly 0.0
_ZERO_BLUR_RAW = -1000.0

MapLike = Union[np.ndarray, Tensor]
# H x W, pixels, >= 0
BlurRadiusMap = MapLike
# H x W, >= 0; zero exactly where D == D_f when A > 0
DefocusMap = MapLike


def inverse_softplus(value: float) -> float:
    if value < 0:
        raise ParameterError(f"blur intensity A must be >= 0, got {value}")
    if value == 0:
        return _ZERO_BLUR_RAW
    return value + math.log(-math.expm1(-value))


class DefocusParams:
    """Learnable (A, D_f) stored as two blocks of a ParamStore."""

    A_BLOCK = "defocus.a_raw"
    DF_BLOCK = "defocus.focal"

    def __init__(self, store: ParamStore):
        if self.A_BLOCK not in store or self.DF_BLOCK not in store:
            raise ParameterError("store does not hold defocus parameters")
        self.store = store

    @classmethod
    def create(cls, A: float = A_INIT, D_f: float = DF_INIT, trainable: bool = True) -> "DefocusParams":
        if not math.isfinite(D_f):
            raise NumericError(f"focal disparity must be finite, got {D_f}")
        store = ParamStore()
        store.add(cls.A_BLOCK, [inverse_softplus(float(A))], trainable)
        store.add(cls.DF_BLOCK, [float(D_f)], trainable)
        return cls(store)

    def A_tensor(self) -> Tensor:
        return self.store[self.A_BLOCK].softplus()

    def Df_tensor(self) -> Tensor:
        return self.store[self.DF_BLOCK] * 1.0

    @property
    def A(self) -> float:
        return float(np.logaddexp(0.0, self.store[self.A_BLOCK].data[0]))

    @property
    def D_f(self) -> float:
        return float(self.store[self.DF_BLOCK].data[0])

    def as_dict(self) -> dict:
        return {"A": self.A, "D_f": self.D_f}

    def __repr__(self) -> str:
        return f"DefocusParams(A={self.A:.4f}, D_f={self.D_f:.4f})"


def _radius(params: DefocusParams, disparity: MapLike) -> Tensor:
    disparity = Tensor.lift(disparity)
    if not np.all(np.isfinite(disparity.data)):
        raise NumericError("disparity map has non-finite values")
    return params.A_tensor() * (params.Df_tensor() - disparity).abs()


def coc_radius(params: DefocusParams, disparity: MapLike) -> Tensor:
    """CoC blur radius r = A·|D_f - D| per pixel, on the tape."""
    return _radius(params, disparity)


def defocus_map(params: DefocusParams, disparity: MapLike) -> Tensor:
    """D_defocus = A·|D - D_f|; the same kernel as coc_radius."""
    return _radius(params, disparity)


def smooth_heaviside(x, beta: float = BETA):
    """H(x) = 1/2 + 1/2·tanh(beta·x). Returns the kind it was given."""
    if isinstance(x, Tensor):
        return 0.5 + 0.5 * (x * beta).tanh()
    return 0.5 + 0.5 * np.tanh(beta * np.asarray(x, dtype=np.float64))


def scatter_weight(r_center, distance, beta: float = BETA, r_min: float = 0.5):
    """K = H(r - d) / max(r, r_min)^2 for a source of radius r at offset distance d."""
    if isinstance(r_center, Tensor):
        return smooth_heaviside(r_center - distance, beta) / (r_center.clamp_min(r_min) ** 2)
    r = np.asarray(r_center, dtype=np.float64)
    if np.any(r < 0):
        raise ParameterError("scatter radius must be >= 0")
    return smooth_heaviside(r - distance, beta) / np.maximum(r, r_min) ** 2


def normalize_map(values) -> np.ndarray:
    """(m - min) / (max - min); a constant map becomes all zeros."""
    m = np.asarray(values.data if isinstance(values, Tensor) else values, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NumericError("cannot normalize a map with non-finite values")
    lo, hi = float(m.min()), float(m.max())
    if hi - lo <= 0.0:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)
