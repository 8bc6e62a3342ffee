"""
Procedural scenes of fronto-parallel textured planes and their analytic renders.

World frame: the reference camera sits at the origin looking down +z with +y
down; a plane of disparity d lies at z = 1/d. The last plane of a scene is an
unbounded background, so every forward ray hits something.
"""

from typing import NamedTuple, Optional

import numpy as np

from app.imaging.image import Image
from app.models.data_models import PlaneSpec, SceneSpec
from app.radiance.camera import CameraModel, generate_rays, pixel_grid
from app.utils.error_handler import ParameterError
from app.utils.logging_utils import get_logger
from app.utils.random_utils import substream

logger = get_logger("scenegen")

FOV_X_DEG = 50.0
ASPECT = 0.75
FRONT_RANGE = (0.75, 0.9)
BACK_RANGE = (0.1, 0.18)
MIN_GAP = 0.05
CELL_PER_DEPTH = 0.05
TEXTURES = ("checker", "noise", "stripes")

_MASK32 = np.uint64(0xFFFFFFFF)


# --------------------------
# TEXTURES
# --------------------------

def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Integer lattice hash to [0, 1)."""
    h = (ix.astype(np.int64).astype(np.uint64) * np.uint64(374761393)
         + iy.astype(np.int64).astype(np.uint64) * np.uint64(668265263)
         + np.uint64(seed) * np.uint64(2147483647)) & _MASK32
    h = ((h ^ (h >> np.uint64(13))) * np.uint64(1274126177)) & _MASK32
    h = h ^ (h >> np.uint64(16))
    return h.astype(np.float64) / 4294967296.0


def value_noise(u: np.ndarray, v: np.ndarray, cell: float, seed: int) -> np.ndarray:
    x, y = u / cell, v / cell
    ix, iy = np.floor(x), np.floor(y)
    fx, fy = x - ix, y - iy
    sx, sy = fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy)
    n00 = _hash01(ix, iy, seed)
    n10 = _hash01(ix + 1, iy, seed)
    n01 = _hash01(ix, iy + 1, seed)
    n11 = _hash01(ix + 1, iy + 1, seed)
    top = n00 + sx * (n10 - n00)
    bottom = n01 + sx * (n11 - n01)
    return top + sy * (bottom - top)


def texture_pattern(plane: PlaneSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scalar pattern in [0, 1] at plane-local coordinates (u, v)."""
    cell, seed = plane.cell_size, plane.texture_seed
    detail = value_noise(u, v, 0.5 * cell, seed + 1) - 0.5
    if plane.texture == "checker":
        parity = np.mod(np.floor(u / cell) + np.floor(v / cell), 2.0)
        pattern = 0.2 + 0.6 * parity + 0.25 * detail
    elif plane.texture == "stripes":
        pattern = 0.5 + 0.4 * np.sin(np.pi * u / cell) + 0.25 * detail
    else:
        coarse = value_noise(u, v, cell, seed)
        pattern = 0.5 + 1.2 * (0.6 * coarse + 0.4 * (detail + 0.5) - 0.5)
    return np.clip(pattern, 0.0, 1.0)


def texture_color(plane: PlaneSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """N x 3 display-encoded colour."""
    pattern = texture_pattern(plane, u, v)
    return np.clip(np.asarray(plane.base_color) * (0.15 + 0.85 * pattern)[..., None], 0.0, 1.0)


def texture_patch(plane: PlaneSpec, size: int = 64, samples_per_cell: float = 5.0) -> Image:
    """The plane's texture seen head-on at roughly the dataset's sampling density."""
    step = plane.cell_size / samples_per_cell
    v, u = np.mgrid[0:size, 0:size].astype(np.float64) * step
    return Image(texture_color(plane, u.ravel(), v.ravel()).reshape(size, size, 3))


# --------------------------
# SCENE LAYOUT
# --------------------------

def _visible_half_width(depth: float) -> float:
    return depth * np.tan(np.radians(FOV_X_DEG) / 2.0)


def _plan_disparities(rng: np.random.Generator, n_planes: int, focus_disparity: Optional[float]) -> list:
    front = rng.uniform(*FRONT_RANGE)
    back = rng.uniform(*BACK_RANGE)
    middle = sorted(rng.uniform(back + 0.08, front - 0.08, size=n_planes - 2), reverse=True)
    disparities = [front] + list(middle) + [back]
    if focus_disparity is None:
        return disparities

    nearest = int(np.argmin([abs(d - focus_disparity) for d in disparities]))
    disparities[nearest] = float(focus_disparity)
    # planes crowding the focal plane would blur into it
    kept = [
        d for i, d in enumerate(disparities)
        if i == nearest or i == len(disparities) - 1 or abs(d - focus_disparity) >= MIN_GAP
    ]
    if len(kept) < 2:
        raise ParameterError(f"focus disparity {focus_disparity} leaves fewer than two planes")
    return kept


def build_scene(seed: int, n_planes: Optional[int] = None, focus_disparity: Optional[float] = None) -> SceneSpec:
    """
    Deterministic scene for `seed`: 2-5 planes, strictly decreasing disparity,
    front plane near the camera and partly covering the view, an unbounded
    background, middle planes placed off to the sides. With `focus_disparity`
    the closest plane is moved onto it so a main camera focused there has a
    sharp plane.
    """
    if focus_disparity is not None and not 0.0 < focus_disparity <= 1.0:
        raise ParameterError(f"focus disparity must lie in (0, 1], got {focus_disparity}")
    rng = substream(seed, "scenegen.layout")
    n_planes = int(n_planes if n_planes is not None else rng.integers(2, 6))
    if not 2 <= n_planes <= 5:
        raise ParameterError(f"plane count must be within [2, 5], got {n_planes}")

    disparities = _plan_disparities(rng, n_planes, focus_disparity)
    planes = []
    for i, disparity in enumerate(disparities):
        depth = 1.0 / disparity
        reach = _visible_half_width(depth)
        is_back = i == len(disparities) - 1
        if is_back:
            center, half = [0.0, 0.0], None
        elif i == 0:
            center = [rng.uniform(-0.15, 0.15) * reach, rng.uniform(-0.15, 0.15) * reach * ASPECT]
            half = [rng.uniform(0.3, 0.45) * reach, rng.uniform(0.35, 0.55) * reach * ASPECT]
        else:
            side = 1.0 if i % 2 else -1.0
            center = [side * rng.uniform(0.35, 0.55) * reach, rng.uniform(-0.3, 0.3) * reach * ASPECT]
            half = [rng.uniform(0.25, 0.4) * reach, rng.uniform(0.3, 0.6) * reach * ASPECT]
        planes.append(
            PlaneSpec(
                disparity=float(disparity),
                center=[float(c) for c in center],
                half_extent=None if half is None else [float(h) for h in half],
                texture=TEXTURES[int(rng.integers(len(TEXTURES)))],
                texture_seed=int(rng.integers(0, 2**31 - 1)),
                base_color=[float(c) for c in rng.uniform(0.5, 1.0, size=3)],
                cell_size=float(CELL_PER_DEPTH * depth * rng.uniform(0.9, 1.2)),
            )
        )
    spec = SceneSpec(seed=seed, planes=planes)
    logger.debug(f"scene {seed}: disparities {[round(p.disparity, 3) for p in spec.planes]}")
    return spec


# --------------------------
# ANALYTIC RENDER
# --------------------------

class SceneRender(NamedTuple):
    image: Image
    disparity: np.ndarray  # H x W, 1 / camera-space depth, <= 1
    layers: np.ndarray     # H x W plane index
    distance: np.ndarray   # H x W ray parameter t of the hit


def intersect_plane(plane: PlaneSpec, origins: np.ndarray, directions: np.ndarray):
    """(t, hit) per ray; t = inf where the ray misses the plane's extent."""
    dz = directions[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dz > 1e-12, (plane.depth - origins[:, 2]) / dz, np.inf)
    t = np.where(t > 0.0, t, np.inf)
    finite_t = np.where(np.isfinite(t), t, 0.0)
    hit = origins + finite_t[:, None] * directions
    if not plane.is_background:
        u = hit[:, 0] - plane.center[0]
        v = hit[:, 1] - plane.center[1]
        inside = (np.abs(u) <= plane.half_extent[0]) & (np.abs(v) <= plane.half_extent[1])
        t = np.where(inside, t, np.inf)
    return t, hit


def render_layers(spec: SceneSpec, cam: CameraModel) -> SceneRender:
    rays = generate_rays(cam, pixel_grid(cam))
    n = len(rays)
    best_t = np.full(n, np.inf)
    layers = np.full(n, -1, dtype=np.int64)
    colors = np.zeros((n, 3))
    for index, plane in enumerate(spec.planes):
        t, hit = intersect_plane(plane, rays.origins, rays.directions)
        nearer = t < best_t
        if not nearer.any():
            continue
        best_t = np.where(nearer, t, best_t)
        layers = np.where(nearer, index, layers)
        u = hit[nearer, 0] - plane.center[0]
        v = hit[nearer, 1] - plane.center[1]
        colors[nearer] = texture_color(plane, u, v)
    if np.any(layers < 0):
        raise ParameterError("camera does not see the scene: some rays miss the background plane")
    disparity = np.minimum(1.0 / (best_t * rays.axial), 1.0)
    shape = (cam.height, cam.width)
    return SceneRender(
        Image(colors.reshape(shape + (3,))),
        disparity.reshape(shape),
        layers.reshape(shape),
        best_t.reshape(shape),
    )


def render_aif(spec: SceneSpec, cam: CameraModel):
    """All-in-focus render and its exact disparity map (nearest plane wins)."""
    out = render_layers(spec, cam)
    return out.image, out.disparity
