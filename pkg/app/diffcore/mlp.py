"""Fully connected networks evaluated on the differentiation tape."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.diffcore.params import ParamStore
from app.diffcore.tensor import Tensor
from app.utils.error_handler import ParameterError, ShapeError

ACTIVATIONS = ("relu", "identity", "sigmoid", "softplus", "tanh")


@dataclass(frozen=True)
class MlpArch:
    """
    Layer widths (input first) and one activation per affine layer.

    Parameter blocks are named "<name>.<i>.weight" (in x out) and
    "<name>.<i>.bias" (out,).
    """
    name: str
    widths: Tuple[int, ...]
    activations: Tuple[str, ...]

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ParameterError(f"{self.name}: an MLP needs at least one layer")
        if any(w <= 0 for w in self.widths):
            raise ParameterError(f"{self.name}: layer widths must be positive, got {self.widths}")
        if len(self.activations) != len(self.widths) - 1:
            raise ParameterError(
                f"{self.name}: {len(self.widths) - 1} layers but {len(self.activations)} activations"
            )
        unknown = set(self.activations) - set(ACTIVATIONS)
        if unknown:
            raise ParameterError(f"{self.name}: unknown activations {sorted(unknown)}")

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @property
    def num_layers(self) -> int:
        return len(self.widths) - 1

    def block_names(self):
        for i in range(self.num_layers):
            yield f"{self.name}.{i}.weight", f"{self.name}.{i}.bias"

    @classmethod
    def hidden(cls, name: str, in_dim: int, width: int, depth: int, out_dim: int, out_act: str = "identity"):
        """`depth` rectifier layers of `width` followed by one output layer."""
        widths = (in_dim,) + (width,) * depth + (out_dim,)
        return cls(name, widths, ("relu",) * depth + (out_act,))


def init_mlp(store: ParamStore, arch: MlpArch, rng: np.random.Generator, zero_last: bool = False) -> None:
    """He-uniform weights, zero biases. `zero_last` zeroes the output layer."""
    for i, (w_name, b_name) in enumerate(arch.block_names()):
        fan_in, fan_out = arch.widths[i], arch.widths[i + 1]
        bound = np.sqrt(6.0 / fan_in)
        if zero_last and i == arch.num_layers - 1:
            weight = np.zeros((fan_in, fan_out))
        else:
            weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        store.add(w_name, weight)
        store.add(b_name, np.zeros(fan_out))


def _activate(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return x.relu()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "softplus":
        return x.softplus()
    if kind == "tanh":
        return x.tanh()
    return x


def mlp_forward(params: ParamStore, arch: MlpArch, inputs) -> Tensor:
    """Evaluates `arch` on an (N, in_dim) batch; the returned tensor carries the tape."""
    x = Tensor.lift(inputs)
    if x.ndim != 2 or x.shape[1] != arch.in_dim:
        raise ShapeError(f"{arch.name}: expected input (N, {arch.in_dim}), got {x.shape}")
    for (w_name, b_name), kind in zip(arch.block_names(), arch.activations):
        x = _activate(x @ params[w_name] + params[b_name], kind)
    return x
