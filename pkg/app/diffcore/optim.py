"""Adam with a continuous exponential learning-rate decay."""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from app.diffcore.params import ParamStore
from app.utils.error_handler import NumericError, ParameterError

BASE_LR = 5e-4
DECAY_STEPS = 250_000


def lr_schedule(step: int, base_lr: float = BASE_LR, decay_steps: int = DECAY_STEPS) -> float:
    """base · 0.1^(step / decay_steps): one decade per `decay_steps`."""
    if step < 0:
        raise ParameterError(f"step must be >= 0, got {step}")
    return base_lr * 0.1 ** (step / decay_steps)


@dataclass
class AdamState:
    base_lr: float = BASE_LR
    decay_steps: int = DECAY_STEPS
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def lr(self) -> float:
        return lr_schedule(self.step, self.base_lr, self.decay_steps)


def adam_step(state: AdamState, params: ParamStore, grads: Optional[Dict[str, np.ndarray]] = None) -> ParamStore:
    """
    One Adam update of every trainable block, in place.
    `grads` defaults to the gradients accumulated on the store.
    """
    grads = params.gradients() if grads is None else grads
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for block '{name}' at step {state.step}")

    lr = state.lr()
    t = state.step + 1
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in params or not params.is_trainable(name):
            continue
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        block = params[name]
        block.data = block.data - update
    state.step = t
    return params
