"""Adam with bias correction and the step-halving learning-rate schedule."""
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from spair.core.errors import NonFiniteError, StructuralError
from spair.schemas.run import TrainConfig

BETA1 = 0.9
BETA2 = 0.999
EPS_ADAM = 1e-8


@dataclass
class AdamState:
    """First/second moments keyed by parameter path plus the step counter."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS_ADAM


def adam_update(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                state: AdamState, lr: float) -> None:
    """One Adam step, in place on ``params`` and ``state``.

    The whole step is rejected (nothing is modified) if any gradient is non-finite.
    """
    for path, g in grads.items():
        if path not in params:
            raise StructuralError(f"gradient for unknown parameter {path}")
        if g.shape != params[path].shape:
            raise StructuralError(f"{path}: gradient shape {g.shape} != parameter {params[path].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {path}; step {state.step + 1} rejected")

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    step_size = lr / bc1

    for path, g in grads.items():
        p = params[path]
        if path not in state.m:
            state.m[path] = np.zeros_like(p)
            state.v[path] = np.zeros_like(p)
        m, v = state.m[path], state.v[path]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v * (1.0 / bc2)) + state.eps
        p -= (step_size * m / denom).astype(p.dtype)


def lr_at(iteration: int, config: TrainConfig) -> float:
    """lr0 * 2**-floor(epoch / period), one epoch being ``iterations_per_epoch`` iterations."""
    epoch = iteration // config.iterations_per_epoch
    return config.learning_rate * 2.0 ** -(epoch // config.lr_halving_period_epochs)
