"""RMSProp with caller-controlled update direction, plus weight clipping.

The training loops apply ``param <- param + direction * lr * g / sqrt(s + eps)``
with ``s <- decay * s + (1 - decay) * g^2``; direction +1 ascends (critic),
-1 descends. Momentum-based optimizers are deliberately absent.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class RmsPropState:
    mean_square: list = field(default_factory=list)
    decay: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.decay < 1.0):
            raise ValueError("decay must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


def rmsprop_init(params, decay=0.9, epsilon=1e-8) -> RmsPropState:
    return RmsPropState(
        mean_square=[np.zeros_like(p.data if isinstance(p, Tensor) else p) for p in params],
        decay=decay,
        epsilon=epsilon,
    )


def rmsprop_step(params, grads, state: RmsPropState, lr: float, direction: float = 1.0):
    """Advance the accumulator and move every parameter in place."""
    if len(params) != len(grads) or len(params) != len(state.mean_square):
        raise ShapeMismatch("params/grads/state length mismatch")
    for p, g, s in zip(params, grads, state.mean_square):
        data = p.data if isinstance(p, Tensor) else p
        if g.shape != data.shape:
            raise ShapeMismatch(f"grad shape {g.shape} != param shape {data.shape}")
        s *= state.decay
        s += (1.0 - state.decay) * g * g
        data += (direction * lr) * g / np.sqrt(s + state.epsilon)
    return params, state


def clip_weights(params, c: float):
    """Clamp every parameter value to [-c, c], in place. Idempotent."""
    if c <= 0:
        raise ValueError("clipping parameter must be positive")
    for p in params:
        data = p.data if isinstance(p, Tensor) else p
        np.clip(data, -c, c, out=data)
    return params
