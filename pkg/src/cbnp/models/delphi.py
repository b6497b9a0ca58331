"""DELPHI-V compartmental model with vaccination (single age group)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DynamicalModel, per_epoch, register

COMPARTMENTS = ("S", "E", "I", "U", "H", "Q", "D", "S_v", "E_v", "I_v", "M")
S, E, I, U, H, Q, D, SV, EV, IV, M = range(11)


@register
@dataclass(frozen=True)
class DelphiV(DynamicalModel):
    """Eleven-compartment COVID model; the control is a vaccine count per epoch.

    States are population fractions. A decision of ``x`` doses over an epoch of
    length ``dt`` becomes the rate ``x / (population * dt)``. The exit rate from
    ``I`` is ``r_u + r_h + r_q`` so that total mass is conserved. The vaccinated
    compartments ``S_v, E_v, I_v`` carry no flows in this formulation and keep
    their initial values; immunized mass accrues in ``M``.

    ``gamma``, ``r_u``, ``r_h`` and ``r_q`` accept either a constant or a
    per-epoch sequence.
    """

    model_id = "delphi_v"
    compartments = COMPARTMENTS
    control_names = ("vaccines",)
    dynamic_params = ("alpha", "gamma", "beta", "r_i", "r_u", "r_h", "r_q", "r_death")
    param_ceilings = {"beta": 1.0}

    alpha: float = 0.3
    gamma: float | tuple = 1.0
    beta: float = 0.9
    r_i: float = 0.25
    r_u: float | tuple = 0.1
    r_h: float | tuple = 0.02
    r_q: float | tuple = 0.08
    r_death: float = 0.05
    c_d: float = 1.0
    c_e: float = 0.01
    c_h: float = 0.1
    c_q: float = 0.01
    pallet: int = 10000
    population: float = 1.0e6
    # S / depletion_time caps the vaccination transfer so S never crosses zero
    depletion_time: float = 7.0

    def __post_init__(self):
        for name in ("alpha", "beta", "r_i", "r_death", "population", "depletion_time"):
            if float(getattr(self, name)) < 0:
                raise ValueError(f"DELPHI-V parameter {name} must be non-negative")
        for name in ("gamma", "r_u", "r_h", "r_q"):
            if np.any(np.asarray(getattr(self, name), dtype=float) < 0):
                raise ValueError(f"DELPHI-V parameter {name} must be non-negative")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("vaccine effectiveness beta must lie in [0, 1]")
        if int(self.pallet) != self.pallet or self.pallet <= 0:
            raise ValueError("pallet size must be a positive integer")

    def r_d(self, epoch: int = 0) -> float:
        return per_epoch(self.r_u, epoch) + per_epoch(self.r_h, epoch) + per_epoch(self.r_q, epoch)

    def derivative(self, states, controls, epoch, t=0.0):
        x = np.asarray(states)
        xbar = controls[:, 0] / self.population
        if np.any(xbar < 0):
            raise ValueError("vaccination rate must be non-negative")
        ag = self.alpha * per_epoch(self.gamma, epoch)
        ru, rh, rq = (per_epoch(v, epoch) for v in (self.r_u, self.r_h, self.r_q))
        s = x[:, S]
        vacc = np.minimum(self.beta * xbar, np.maximum(s, 0.0) / self.depletion_time)
        infect = ag * np.maximum(s - vacc, 0.0) * x[:, I]
        out = np.zeros_like(x)
        out[:, S] = -infect - vacc
        out[:, E] = infect - self.r_i * x[:, E]
        out[:, I] = self.r_i * x[:, E] - (ru + rh + rq) * x[:, I]
        out[:, U] = ru * x[:, I] - self.r_death * x[:, U]
        out[:, H] = rh * x[:, I] - self.r_death * x[:, H]
        out[:, Q] = rq * x[:, I] - self.r_death * x[:, Q]
        out[:, D] = self.r_death * (x[:, U] + x[:, H] + x[:, Q])
        out[:, M] = vacc
        return out

    def terminal_cost(self, states):
        """Weighted terminal deaths, hospitalised, quarantined and exposed, counted in people."""
        x = np.asarray(states)
        return self.population * (self.c_d * x[:, D] + self.c_h * x[:, H] + self.c_q * x[:, Q] + self.c_e * x[:, E])


def delphi_v_transition(state, vaccines: float, params: DelphiV, epoch: int = 0) -> np.ndarray:
    """Derivative of one 11-dim state under a vaccination rate (doses per unit time)."""
    if vaccines < 0:
        raise ValueError("vaccination rate must be non-negative")
    return params.derivative(np.asarray(state, dtype=float)[None, :], np.array([[vaccines]]), epoch)[0]


# Synthetic parameter sets: R0 = alpha * gamma / r_d with r_d = 0.2 per day.
P0 = DelphiV(alpha=0.3)
P1 = DelphiV(alpha=0.6)


def initial_state(infected: float = 0.01, exposed: float = 0.005, removed: float = 0.0) -> np.ndarray:
    m0 = np.zeros(11)
    m0[E] = exposed
    m0[I] = infected
    m0[D] = removed
    m0[S] = 1.0 - infected - exposed - removed
    return m0
