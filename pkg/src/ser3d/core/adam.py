"""Adam with bias-corrected moment estimates."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError


@dataclass
class AdamState:
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0
    learning_rate: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: dict, **hyper) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
            **hyper,
        )


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """Apply one Adam update to ``params`` in place.

    All gradients are validated before anything is touched, so a bad
    gradient leaves parameters and moments exactly as they were.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape or state.first_moment[name].shape != p.shape:
            raise DimensionError(f"adam_step: gradient/state for {name!r} does not match {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adam_step: non-finite gradient for parameter {name!r}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    step_size = state.learning_rate / (1.0 - b1 ** t)
    v_scale = 1.0 / (1.0 - b2 ** t)
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (step_size * m / (np.sqrt(v * v_scale) + state.epsilon)).astype(p.dtype, copy=False)
    return params, state
