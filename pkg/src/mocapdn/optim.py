"""Adam optimizer with bias correction.

The update divides by sqrt(vhat + eps); see tests for the hand-evaluated
step-1 recurrence this matches. Updates are applied in place through the
selected kernel backend and are deterministic.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .autodiff import ShapeError, Tensor


class GradientError(ValueError):
    """A gradient is non-finite or has the wrong shape."""


class AdamState:
    """Per-parameter first/second moment buffers plus the shared step count."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> tuple[dict[str, Tensor], AdamState]:
    """One bias-corrected Adam step over all parameters, in place.

    Parameters are visited in sorted name order so the step count and
    moment updates are reproducible. lr=0 leaves parameters unchanged.
    """
    if lr < 0:
        raise ValueError(f"adam_step: learning rate must be non-negative, got {lr}")
    state.t += 1
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: gradient shape {g.shape} does not match "
                f"parameter {name!r} of shape {p.data.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise GradientError(f"adam_step: non-finite gradient for parameter {name!r}")
        _kernels.adam_update(
            p.data.reshape(-1), np.ascontiguousarray(g.reshape(-1)),
            state.m[name].reshape(-1), state.v[name].reshape(-1),
            state.t, lr, state.beta1, state.beta2, state.eps,
        )
    return params, state
