from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class OptimState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, **hyper) -> "OptimState":
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)


def adam_step(params: np.ndarray, grad: np.ndarray, state: OptimState) -> tuple[np.ndarray, OptimState]:
    """One bias-corrected Adam update; returns new arrays and leaves the inputs untouched."""
    if params.shape != grad.shape or grad.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"non-finite gradient at step {state.step + 1}")
    step = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1 ** step)
    v_hat = v / (1 - state.beta2 ** step)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, OptimState(m, v, step, state.lr, state.beta1, state.beta2, state.eps)
