"""
Named parameter blocks and their checkpoint format.

Checkpoint layout (little-endian):
    b"DCKP" | uint32 header length | UTF-8 JSON header | float64 payload
The header lists block names, shapes and trainable flags in payload order,
plus the optimizer step counter and free-form metadata.
"""

import json
import struct
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from app.diffcore.tensor import Tensor
from app.utils.error_handler import FormatError, NumericError, ParameterError, ShapeError

CHECKPOINT_MAGIC = b"DCKP"


class ParamStore:
    """Ordered mapping of unique block names to trainable leaf tensors."""

    def __init__(self):
        self._blocks: Dict[str, Tensor] = {}
        self._trainable: Dict[str, bool] = {}

    # --- block management ---
    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._blocks:
            raise ParameterError(f"duplicate parameter block '{name}'")
        data = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NumericError(f"parameter block '{name}' has non-finite values")
        leaf = Tensor(data, requires_grad=trainable, name=name)
        self._blocks[name] = leaf
        self._trainable[name] = trainable
        return leaf

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._blocks[name]
        except KeyError:
            raise ParameterError(f"unknown parameter block '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def __iter__(self) -> Iterator[str]:
        return iter(self._blocks)

    def __len__(self) -> int:
        return len(self._blocks)

    def names(self, prefix: str = "") -> List[str]:
        return [n for n in self._blocks if n.startswith(prefix)]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, names, flag: bool) -> None:
        for name in names:
            self[name].requires_grad = flag
            self._trainable[name] = flag

    def freeze(self, prefix: str = "") -> None:
        self.set_trainable(self.names(prefix), False)

    def unfreeze(self, prefix: str = "") -> None:
        self.set_trainable(self.names(prefix), True)

    def assign(self, name: str, value) -> None:
        block = self[name]
        data = np.asarray(value, dtype=np.float64)
        if data.shape != block.data.shape:
            raise ShapeError(f"block '{name}' has shape {block.data.shape}, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite assignment to block '{name}'")
        block.data = data.copy()

    # --- gradients ---
    def zero_grad(self) -> None:
        for block in self._blocks.values():
            block.grad = None

    def gradients(self) -> Dict[str, np.ndarray]:
        """Gradient per block; blocks the loss never reached get zeros."""
        return {
            name: (block.grad.copy() if block.grad is not None else np.zeros_like(block.data))
            for name, block in self._blocks.items()
        }

    # --- bulk access ---
    def values(self) -> Dict[str, np.ndarray]:
        return {name: block.data.copy() for name, block in self._blocks.items()}

    def load_values(self, values: Dict[str, np.ndarray]) -> None:
        for name, data in values.items():
            self.assign(name, data)

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for name, block in self._blocks.items():
            clone.add(name, block.data.copy(), self._trainable[name])
        return clone

    def subset(self, names) -> "ParamStore":
        """Copy holding only `names`."""
        part = ParamStore()
        for name in names:
            part.add(name, self[name].data.copy(), self._trainable[name])
        return part

    def merge(self, other: "ParamStore") -> None:
        for name in other:
            self.add(name, other[name].data, other.is_trainable(name))

    def num_params(self) -> int:
        return int(sum(block.data.size for block in self._blocks.values()))

    # --- checkpoints ---
    def save(self, path, step: int = 0, meta: Optional[dict] = None) -> Path:
        return save_checkpoint(path, self, step, meta)

    @classmethod
    def load(cls, path) -> "ParamStore":
        store, _, _ = load_checkpoint(path)
        return store


def save_checkpoint(path, store: ParamStore, step: int = 0, meta: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "blocks": [
            {"name": name, "shape": list(store[name].data.shape), "trainable": store.is_trainable(name)}
            for name in store
        ],
        "step": int(step),
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(store[name].data, dtype="<f8").tobytes() for name in store
    )
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
    return path


def load_checkpoint(path) -> Tuple[ParamStore, int, dict]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 8:
        raise FormatError(f"{path} is not a parameter checkpoint")
    (header_len,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"corrupt checkpoint header in {path}: {e}") from e

    store = ParamStore()
    offset = 8 + header_len
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise FormatError(f"checkpoint {path} is truncated at block '{block['name']}'")
        data = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        store.add(block["name"], data, block["trainable"])
        offset = end
    if offset != len(raw):
        raise FormatError(f"checkpoint {path} has {len(raw) - offset} trailing bytes")
    return store, int(header["step"]), header.get("meta", {})
