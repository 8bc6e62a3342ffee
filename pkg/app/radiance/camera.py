"""
Pinhole cameras and ray generation.

Camera space: +x right, +y down, +z along the optical axis. `rotation` maps
camera-space directions to world space; `translation` is the projection
center in world coordinates.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from app.utils.error_handler import ParameterError, ShapeError


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 0.1
    far: float = 10.0

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError(f"focal lengths must be > 0, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ParameterError(f"resolution must be > 0, got {self.width}x{self.height}")
        if not self.near < self.far:
            raise ParameterError(f"near ({self.near}) must be < far ({self.far})")
        if rotation.shape != (3, 3):
            raise ShapeError(f"rotation must be 3x3, got {rotation.shape}")
        if np.max(np.abs(rotation @ rotation.T - np.eye(3))) > 1e-9:
            raise ParameterError("rotation is not orthonormal")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float, **kwargs) -> "CameraModel":
        focal = 0.5 * width / np.tan(np.radians(fov_x_deg) / 2.0)
        return cls(focal, focal, width / 2.0, height / 2.0, width, height, **kwargs)

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def with_bounds(self, near: float, far: float) -> "CameraModel":
        return replace(self, near=near, far=far)

    def to_record(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
            "near": self.near, "far": self.far,
        }

    @classmethod
    def from_record(cls, record) -> "CameraModel":
        data = record if isinstance(record, dict) else record.model_dump()
        return cls(
            fx=data["fx"], fy=data["fy"], cx=data["cx"], cy=data["cy"],
            width=data["width"], height=data["height"],
            rotation=np.array(data["rotation"]), translation=np.array(data["translation"]),
            near=data["near"], far=data["far"],
        )


def look_at(eye, target, up=(0.0, -1.0, 0.0)) -> np.ndarray:
    """World-from-camera rotation whose +z points from `eye` to `target` (+y down)."""
    eye, target, up = (np.asarray(v, dtype=np.float64) for v in (eye, target, up))
    z = target - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


@dataclass(frozen=True)
class Rays:
    """Origins and unit directions (N x 3); `axial` is each direction's cosine to the optical axis."""
    origins: np.ndarray
    directions: np.ndarray
    axial: np.ndarray

    def __len__(self) -> int:
        return len(self.origins)

    def subset(self, index) -> "Rays":
        return Rays(self.origins[index], self.directions[index], self.axial[index])


def pixel_grid(cam: CameraModel) -> np.ndarray:
    """All (u, v) pixel indices, row-major, shape (H·W, 2)."""
    v, u = np.mgrid[0:cam.height, 0:cam.width]
    return np.stack([u.ravel(), v.ravel()], axis=1).astype(np.float64)


def generate_rays(cam: CameraModel, pixels) -> Rays:
    """Rays through pixel centers (u + 0.5, v + 0.5)."""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    if pixels.shape[1] != 2:
        raise ShapeError(f"pixels must be (N, 2), got {pixels.shape}")
    u, v = pixels[:, 0], pixels[:, 1]
    if np.any(u < 0) or np.any(v < 0) or np.any(u >= cam.width) or np.any(v >= cam.height):
        raise ParameterError(f"pixel outside the {cam.width}x{cam.height} image")
    local = np.stack(
        [(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, np.ones_like(u)], axis=1
    )
    local /= np.linalg.norm(local, axis=1, keepdims=True)
    directions = local @ cam.rotation.T
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    origins = np.broadcast_to(cam.translation, directions.shape).copy()
    return Rays(origins, directions, local[:, 2].copy())
