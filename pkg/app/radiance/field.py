"""
Radiance field: positional-encoding MLP mapping (x, d) to (c, sigma).

Layout per field (block prefix = field name):
    trunk   : encoded x -> `depth` rectifier layers of `width` -> features
    sigma   : features -> 1, softplus
    color   : relu(features·W_f + encoded d·W_d + b) -> 3, sigmoid
    blend   : features -> 1, sigmoid (only when the field carries the eta head)
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from app.diffcore.mlp import MlpArch, init_mlp, mlp_forward
from app.diffcore.params import ParamStore
from app.diffcore.tensor import Tensor
from app.radiance.encoding import encoded_dim, positional_encode
from app.utils.error_handler import ShapeError


@dataclass(frozen=True)
class FieldConfig:
    depth: int = 4
    width: int = 64
    color_width: int = 32
    l_pos: int = 10
    l_dir: int = 4
    blend_head: bool = False


class FieldOutput(NamedTuple):
    color: Tensor
    sigma: Tensor
    eta: Optional[Tensor]


class RadianceField:
    def __init__(
        self,
        name: str,
        config: FieldConfig,
        store: ParamStore,
        center=(0.0, 0.0, 0.0),
        scale: float = 1.0,
    ):
        self.name = name
        self.config = config
        self.store = store
        self.center = np.asarray(center, dtype=np.float64)
        self.scale = float(scale)
        self.trunk = MlpArch(
            f"{name}.trunk",
            (self.pos_dim,) + (config.width,) * config.depth,
            ("relu",) * config.depth,
        )

    @classmethod
    def create(
        cls,
        name: str,
        config: FieldConfig,
        rng: np.random.Generator,
        center=(0.0, 0.0, 0.0),
        scale: float = 1.0,
    ) -> "RadianceField":
        store = ParamStore()
        field = cls(name, config, store, center, scale)
        init_mlp(store, field.trunk, rng)
        width, cw = config.width, config.color_width
        store.add(f"{name}.sigma.weight", rng.uniform(-1, 1, (width, 1)) * np.sqrt(6.0 / width) * 0.1)
        store.add(f"{name}.sigma.bias", np.zeros(1))
        store.add(f"{name}.color.feat_w", rng.uniform(-1, 1, (width, cw)) * np.sqrt(6.0 / width))
        store.add(f"{name}.color.dir_w", rng.uniform(-1, 1, (field.dir_dim, cw)) * np.sqrt(6.0 / field.dir_dim))
        store.add(f"{name}.color.bias", np.zeros(cw))
        store.add(f"{name}.color.out_w", rng.uniform(-1, 1, (cw, 3)) * np.sqrt(6.0 / cw))
        store.add(f"{name}.color.out_b", np.zeros(3))
        if config.blend_head:
            field.add_blend_head()
        return field

    def add_blend_head(self) -> None:
        """Zero-initialized eta head, so eta starts at 0.5 everywhere."""
        width = self.config.width
        if f"{self.name}.blend.weight" not in self.store:
            self.store.add(f"{self.name}.blend.weight", np.zeros((width, 1)))
            self.store.add(f"{self.name}.blend.bias", np.zeros(1))
        self.config = FieldConfig(**{**self.config.__dict__, "blend_head": True})

    def zero_output_layers(self) -> None:
        for block in ("sigma.weight", "sigma.bias", "color.out_w", "color.out_b"):
            name = f"{self.name}.{block}"
            self.store.assign(name, np.zeros_like(self.store[name].data))

    # --- dimensions ---
    @property
    def pos_dim(self) -> int:
        return encoded_dim(3, self.config.l_pos)

    @property
    def dir_dim(self) -> int:
        return encoded_dim(3, self.config.l_dir)

    @property
    def input_dim(self) -> int:
        return self.pos_dim + self.dir_dim

    @property
    def output_dim(self) -> int:
        return 4 + (1 if self.config.blend_head else 0)

    def blend_blocks(self):
        return [f"{self.name}.blend.weight", f"{self.name}.blend.bias"]

    def field_blocks(self):
        return [n for n in self.store.names(f"{self.name}.") if n not in self.blend_blocks()]

    # --- evaluation ---
    def _features(self, x: np.ndarray) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ShapeError(f"positions must be (N, 3), got {x.shape}")
        encoded = positional_encode((x - self.center) / self.scale, self.config.l_pos)
        return mlp_forward(self.store, self.trunk, encoded)

    def query(self, x, d, with_blend: bool = False) -> FieldOutput:
        features = self._features(x)
        d = np.asarray(d, dtype=np.float64)
        if d.shape != np.shape(x):
            raise ShapeError(f"directions {d.shape} do not match positions {np.shape(x)}")
        n = self.name
        sigma = (features @ self.store[f"{n}.sigma.weight"] + self.store[f"{n}.sigma.bias"]).softplus()
        hidden = (
            features @ self.store[f"{n}.color.feat_w"]
            + Tensor(positional_encode(d, self.config.l_dir)) @ self.store[f"{n}.color.dir_w"]
            + self.store[f"{n}.color.bias"]
        ).relu()
        color = (hidden @ self.store[f"{n}.color.out_w"] + self.store[f"{n}.color.out_b"]).sigmoid()
        eta = self._eta(features) if with_blend else None
        return FieldOutput(color, sigma.reshape(-1), eta)

    def _eta(self, features: Tensor) -> Tensor:
        if not self.config.blend_head:
            raise ShapeError(f"field '{self.name}' has no blend head")
        n = self.name
        return (features @ self.store[f"{n}.blend.weight"] + self.store[f"{n}.blend.bias"]).sigmoid().reshape(-1)

    def eta(self, x) -> Tensor:
        return self._eta(self._features(x))


def field_query(field: RadianceField, x, d):
    """(c in [0,1]^3, sigma >= 0) at positions x viewed along d."""
    out = field.query(x, d)
    return out.color, out.sigma


def blend_query(field: RadianceField, x, d=None) -> Tensor:
    """eta in [0,1] from the blend head on the field's trunk features; independent of d."""
    return field.eta(x)
