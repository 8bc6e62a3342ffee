import numpy as np

from app.utils.error_handler import ParameterError


def encoded_dim(dim: int, levels: int) -> int:
    return dim * (1 + 2 * levels)


def positional_encode(v, levels: int) -> np.ndarray:
    """[v, sin(2^0·π·v), cos(2^0·π·v), ..., sin(2^(L-1)·π·v), cos(2^(L-1)·π·v)] along the last axis."""
    if levels < 0:
        raise ParameterError(f"encoding levels must be >= 0, got {levels}")
    v = np.asarray(v, dtype=np.float64)
    parts = [v]
    for level in range(levels):
        scaled = (2.0 ** level) * np.pi * v
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    return np.concatenate(parts, axis=-1) if v.ndim > 0 else np.stack(parts)
