"""Bass diffusion with promotion-driven external adoption."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DynamicalModel, register


@register
@dataclass(frozen=True)
class BassModel(DynamicalModel):
    """Two compartments: potential adopters ``A`` and adopters ``B``.

    Decisions are ``(promoted, share)``; only the share drives the dynamics.
    The terminal cost is ``-B(T)`` (adoption is maximized, the solver minimizes).
    """

    model_id = "bass"
    compartments = ("A", "B")
    control_names = ("promoted", "share")
    dynamic_params = ("alpha", "beta")

    alpha: float = 0.5
    beta: float = 0.4
    m: float = 1.0
    increment: float = 0.25
    sparsity: int = 2

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("Bass rates must be non-negative")
        if self.m <= 0:
            raise ValueError("market size must be positive")
        if not 0 < self.increment <= 1:
            raise ValueError("promotion increment must lie in (0, 1]")

    def derivative(self, states, controls, epoch, t=0.0):
        a = states[:, 0]
        b = states[:, 1]
        share = controls[:, 1]
        flow = self.alpha * share * a + (self.beta / self.m) * a * b
        return np.stack([-flow, flow], axis=1)

    def terminal_cost(self, states):
        return -np.asarray(states)[:, 1]


def bass_transition(state, promoted_share: float, params: BassModel) -> np.ndarray:
    """Derivative of ``(A, B)`` when a fraction ``promoted_share`` of users sees the promotion."""
    if not 0.0 <= promoted_share <= 1.0:
        raise ValueError("promoted share must lie in [0, 1]")
    return params.derivative(np.asarray(state, dtype=float)[None, :], np.array([[1.0, promoted_share]]), 0)[0]
