"""
PSNR and SSIM (peak 1.0).

SSIM is evaluated on the differentiation tape so the same code serves as the
evaluation metric and as the structural loss of the defocus stage.
"""

import math

import numpy as np

from app.diffcore.tensor import Tensor
from app.imaging.image import as_array
from app.utils.error_handler import ShapeError

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(a, b) -> float:
    """10·log10(1/MSE); capped at 99 dB for MSE < 1e-10."""
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise ShapeError(f"psnr shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _filter_valid(x: Tensor, window: np.ndarray) -> Tensor:
    """Correlation with `window` over positions where it fits entirely."""
    k = window.shape[0]
    h, w = x.shape
    out_h, out_w = h - k + 1, w - k + 1
    acc = None
    for i in range(k):
        for j in range(k):
            term = x[i:i + out_h, j:j + out_w] * window[i, j]
            acc = term if acc is None else acc + term
    return acc


def _gray_tensor(x) -> Tensor:
    t = Tensor.lift(as_array(x) if not isinstance(x, Tensor) else x)
    if t.ndim == 3:
        return t.mean(axis=2)
    return t


def ssim_map(a, b, window_size: int = SSIM_WINDOW) -> Tensor:
    """Local SSIM over valid windows, grayscale by channel mean. Accepts Tensors."""
    x, y = _gray_tensor(a), _gray_tensor(b)
    if x.shape != y.shape:
        raise ShapeError(f"ssim shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < window_size:
        raise ShapeError(f"ssim needs images of at least {window_size}x{window_size}, got {x.shape}")
    window = gaussian_window(window_size)
    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    sigma_x = _filter_valid(x * x, window) - mu_x * mu_x
    sigma_y = _filter_valid(y * y, window) - mu_y * mu_y
    sigma_xy = _filter_valid(x * y, window) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sigma_xy + SSIM_C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return numerator / denominator


def ssim_tensor(a, b, window_size: int = SSIM_WINDOW) -> Tensor:
    return ssim_map(a, b, window_size).mean()


def ssim(a, b, window_size: int = SSIM_WINDOW) -> float:
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise ShapeError(f"ssim shape mismatch: {x.shape} vs {y.shape}")
    if np.array_equal(x, y):
        return 1.0
    return float(ssim_tensor(x, y, window_size).data)
