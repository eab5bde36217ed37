"""Adam optimizer with bias correction.

Updates are functional: ``adam_step`` returns fresh parameter tensors and
mutates only the optimizer state, keeping parameter tensors immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(params: dict, learning_rate: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        step=0,
        first_moment={name: np.zeros_like(p.data) for name, p in params.items()},
        second_moment={name: np.zeros_like(p.data) for name, p in params.items()},
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update; returns (new params, state).

    Missing gradients are rejected, as are any shape disagreements between a
    parameter, its gradient and its moment buffers.
    """
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise ValueError(f"parameter/gradient name mismatch: {sorted(missing)}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    updated = {}
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        if not (p.data.shape == g.shape == m.shape == v.shape):
            raise ValueError(
                f"shape mismatch for '{name}': param {p.data.shape}, grad {g.shape}, "
                f"moments {m.shape}/{v.shape}"
            )
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.first_moment[name] = m
        state.second_moment[name] = v
        step = state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        updated[name] = Tensor.parameter((p.data - step).astype(p.data.dtype, copy=False))
    return updated, state
