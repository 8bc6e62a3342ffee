"""
Camera degradations: the main camera's shallow depth of field and the
ultra-wide camera's softer, colour-shifted rendition. Both reuse the bokeh
operator that stage 2 later inverts.
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from app.bokeh.defocus import BETA, DefocusParams, coc_radius
from app.bokeh.scatter import R_MIN, scatter_render
from app.imaging.image import DEFAULT_GAMMA, Image
from app.utils.error_handler import ParameterError, ShapeError

ULTRA_BLUR_RADIUS = 0.75
CHANNELS = ("r", "g", "b")
_CHECK_POINTS = 1025


@dataclass(frozen=True)
class ColorCurve:
    """
    Per-channel tone curve on [0, 1]: either cubic a·x + b·x² + c·x³ or a
    power x^p. Construction fails for curves that are not monotone.
    """
    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("cubic", "power"):
            raise ParameterError(f"unknown curve kind '{self.kind}'")
        width = 3 if self.kind == "cubic" else 1
        params = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.params)
        if len(params) != 3 or any(len(p) != width for p in params):
            raise ShapeError(f"{self.kind} curve needs {width} parameter(s) for each of 3 channels")
        object.__setattr__(self, "params", params)
        grid = np.linspace(0.0, 1.0, _CHECK_POINTS)
        for name, channel in zip(CHANNELS, range(3)):
            values = self._channel(grid, channel)
            if not np.all(np.isfinite(values)) or np.any(np.diff(values) < 0):
                raise ParameterError(f"colour curve is not monotone on channel {name}")

    @classmethod
    def identity(cls) -> "ColorCurve":
        return cls("cubic", ((1.0, 0.0, 0.0),) * 3)

    @classmethod
    def cubic(cls, coefficients: Sequence[Sequence[float]]) -> "ColorCurve":
        return cls("cubic", tuple(tuple(c) for c in coefficients))

    @classmethod
    def power(cls, exponents: Sequence[float]) -> "ColorCurve":
        if any(p <= 0 for p in exponents):
            raise ParameterError(f"power exponents must be > 0, got {list(exponents)}")
        return cls("power", tuple((p,) for p in exponents))

    @classmethod
    def random(cls, rng: np.random.Generator, strength: float = 0.25) -> "ColorCurve":
        """
        f(x) = x + k1·x(1-x) + k2·x(1-x)(1-2x) per channel, which keeps
        f(0) = 0, f(1) = 1 and stays monotone for small k1, k2.
        """
        coefficients = []
        for _ in CHANNELS:
            k1 = rng.uniform(-strength, strength)
            k2 = rng.uniform(-0.5 * strength, 0.5 * strength)
            coefficients.append((1.0 + k1 + k2, -k1 - 3.0 * k2, 2.0 * k2))
        return cls.cubic(coefficients)

    def _channel(self, x: np.ndarray, channel: int) -> np.ndarray:
        p = self.params[channel]
        if self.kind == "cubic":
            return p[0] * x + p[1] * x * x + p[2] * x * x * x
        return x ** p[0]

    def apply(self, img: Image) -> Image:
        if img.channels != 3:
            raise ShapeError(f"colour curve needs 3 channels, got {img.channels}")
        out = np.stack([self._channel(img.data[..., c], c) for c in range(3)], axis=-1)
        return Image.clipped(out, img.encoding)

    def to_record(self) -> Dict[str, List[float]]:
        record = {name: list(p) for name, p in zip(CHANNELS, self.params)}
        if self.kind == "power":
            record["power"] = [1.0]
        return record

    @classmethod
    def from_record(cls, record: Dict[str, List[float]]) -> "ColorCurve":
        kind = "power" if "power" in record else "cubic"
        return cls(kind, tuple(tuple(record[name]) for name in CHANNELS))


def simulate_main(
    aif: Image,
    disparity: np.ndarray,
    A: float,
    D_f: float,
    gamma: float = DEFAULT_GAMMA,
    beta: float = BETA,
    r_min: float = R_MIN,
) -> Image:
    """Main-camera capture focused at D_f: scatter bokeh with r = A·|D_f - D|."""
    disparity = np.asarray(disparity, dtype=np.float64)
    if disparity.shape != aif.shape[:2]:
        raise ShapeError(f"disparity {disparity.shape} does not match image {aif.shape[:2]}")
    if A == 0:
        return Image(aif.data.copy(), aif.encoding)
    params = DefocusParams.create(A, D_f, trainable=False)
    radius = coc_radius(params, disparity).data
    return scatter_render(aif, radius, gamma, beta, r_min)


def simulate_ultra(
    aif_ultra: Image,
    curve: ColorCurve,
    blur_radius: float = ULTRA_BLUR_RADIUS,
    gamma: float = DEFAULT_GAMMA,
    beta: float = BETA,
    r_min: float = R_MIN,
) -> Image:
    """
    Ultra-wide capture: uniform mild blur then the colour curve. The
    extrinsic offset and wider field of view come from the camera the AiF
    view was rendered with.
    """
    if blur_radius < 0:
        raise ParameterError(f"blur radius must be >= 0, got {blur_radius}")
    if not isinstance(curve, ColorCurve):
        raise ParameterError("curve must be a ColorCurve")
    soft = aif_ultra
    if blur_radius > 0:
        soft = scatter_render(aif_ultra, np.full(aif_ultra.shape[:2], float(blur_radius)), gamma, beta, r_min)
    return curve.apply(soft)
