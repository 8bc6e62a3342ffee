from typing import Optional, Union

import numpy as np

from app.utils.error_handler import ParameterError

Seed = Union[int, np.random.Generator, None]


def stratified_sample(
    near: float,
    far: float,
    k: int,
    jitter: bool = True,
    seed: Seed = None,
    n_rays: Optional[int] = None,
    lindisp: bool = False,
) -> np.ndarray:
    """
    k depths in [near, far], one per equal-width bin: a uniform draw inside
    each bin with jitter, the bin centers without. Shape (k,) or (n_rays, k).

    With `lindisp` the bins are equal in inverse depth, which puts more
    samples close to the camera.
    """
    if k < 2:
        raise ParameterError(f"need at least 2 samples per ray, got {k}")
    if not near < far:
        raise ParameterError(f"near ({near}) must be < far ({far})")
    if lindisp and near <= 0:
        raise ParameterError(f"inverse-depth sampling needs near > 0, got {near}")
    shape = (k,) if n_rays is None else (n_rays, k)
    if jitter:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        offsets = rng.uniform(0.0, 1.0, size=shape)
    else:
        offsets = np.full(shape, 0.5)
    s = (np.arange(k) + offsets) / k
    if lindisp:
        t = 1.0 / ((1.0 - s) / near + s / far)
        return np.clip(t, near, far)
    edges = np.linspace(near, far, k + 1)
    return edges[:-1] + offsets * np.diff(edges)
