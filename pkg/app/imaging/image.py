"""
Image container and the power-law gamma used throughout the pipeline.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from app.utils.error_handler import ParameterError, ShapeError

Encoding = Literal["display", "linear"]
DEFAULT_GAMMA = 2.0
_RANGE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Image:
    """H x W x C float64 raster with samples in [0, 1]; C is 1 or 3."""
    data: np.ndarray
    encoding: Encoding = "display"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ShapeError(f"image must be HxW, HxWx1 or HxWx3, got {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ShapeError(f"image dimensions must be > 0, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ParameterError("image samples must be finite")
        if data.min() < -_RANGE_TOLERANCE or data.max() > 1.0 + _RANGE_TOLERANCE:
            raise ParameterError(f"image samples outside [0,1]: [{data.min():.4g}, {data.max():.4g}]")
        if self.encoding not in ("display", "linear"):
            raise ParameterError(f"unknown encoding '{self.encoding}'")
        object.__setattr__(self, "data", np.clip(data, 0.0, 1.0))

    @classmethod
    def clipped(cls, data, encoding: Encoding = "display") -> "Image":
        return cls(np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0), encoding)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def gray(self) -> np.ndarray:
        """Channel mean, H x W."""
        return self.data.mean(axis=2)

    def with_data(self, data) -> "Image":
        return Image(data, self.encoding)


def as_array(img) -> np.ndarray:
    return img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)


def to_gray(img) -> np.ndarray:
    data = as_array(img)
    return data.mean(axis=2) if data.ndim == 3 else data


def _check_gamma(gamma: float) -> None:
    if gamma <= 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")


def to_linear(img: Image, gamma: float = DEFAULT_GAMMA) -> Image:
    """I_g = I^gamma."""
    _check_gamma(gamma)
    if img.encoding != "display":
        raise ParameterError("to_linear expects a display-encoded image")
    return Image(img.data ** gamma, "linear")


def to_display(img: Image, gamma: float = DEFAULT_GAMMA) -> Image:
    """Inverse of to_linear: I = I_g^(1/gamma)."""
    _check_gamma(gamma)
    if img.encoding != "linear":
        raise ParameterError("to_display expects a linear image")
    return Image(img.data ** (1.0 / gamma), "display")
