"""Adam optimizer with a log-linear learning-rate decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LrSchedule:
    initial: float = 1e-4
    final: float = 1e-5
    horizon: int = 1

    def at(self, step: int) -> float:
        """Log-linear interpolation from initial (step 0) to final (step horizon)."""
        if self.horizon <= 0:
            return self.final
        f = min(max(step / self.horizon, 0.0), 1.0)
        return float(np.exp((1 - f) * np.log(self.initial) + f * np.log(self.final)))


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p, dtype=np.float32) for p in params],
        v=[np.zeros_like(p, dtype=np.float32) for p in params],
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(state: AdamState, params: list, grads: list, lr: float) -> None:
    """One Adam update, in place on params.

    Raises on non-finite gradients, naming the offending tensor index so a
    diverged run fails loudly instead of corrupting the checkpoint.
    """
    if len(params) != len(state.m) or len(grads) != len(state.m):
        raise ValueError("params/grads do not match optimizer state")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.isfinite(g).all():
            raise FloatingPointError(
                f"non-finite gradient in tensor {i} at optimizer step {t}"
            )
        g = g.astype(np.float32, copy=False)
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
