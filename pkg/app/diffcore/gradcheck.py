"""Central finite differences, used as the oracle for every analytic gradient."""

from typing import Callable, Dict, Iterable, Optional, Union

import numpy as np

from app.diffcore.params import ParamStore
from app.utils.error_handler import ParameterError


def finite_diff_grad(
    f: Callable,
    params: Union[ParamStore, np.ndarray],
    eps: float = 1e-5,
    names: Optional[Iterable[str]] = None,
) -> Union[Dict[str, np.ndarray], np.ndarray]:
    """
    Estimates df/dp by (f(p + eps) - f(p - eps)) / 2eps for every entry.

    `params` is either a ParamStore (then `f(store)` is called and a dict of
    per-block gradients over the trainable blocks, or `names`, is returned) or
    a plain array (then `f(array)` is called and an array is returned).
    """
    if eps <= 0:
        raise ParameterError(f"eps must be > 0, got {eps}")

    if not isinstance(params, ParamStore):
        p = np.array(params, dtype=np.float64)
        return _perturb(lambda: float(f(p)), p, eps)

    names = list(names) if names is not None else [n for n in params if params.is_trainable(n)]
    grads = {}
    for name in names:
        block = params[name]
        grads[name] = _perturb(lambda: float(f(params)), block.data, eps)
    return grads


def _perturb(evaluate: Callable[[], float], data: np.ndarray, eps: float) -> np.ndarray:
    grad = np.zeros_like(data)
    flat = data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = evaluate()
        flat[i] = original - eps
        minus = evaluate()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| over the larger of max |a|, max |n| and `floor`."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), floor)
    return float(np.max(np.abs(analytic - numeric))) / scale
