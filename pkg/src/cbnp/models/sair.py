"""Six-compartment congestion contagion model (2-SAIR)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import DynamicalModel, register

COMPARTMENTS = ("S", "W", "A", "A_w", "I", "R")
S, W, A, AW, I, R = range(6)


@register
@dataclass(frozen=True)
class Sair2Model(DynamicalModel):
    """Free-flow (S) and road-work (W) roads, accidents on each (A, A_w),
    congested (I) and recovered (R) roads.

    Controls are ``(treatment, prevention)`` vehicle counts. Their effect on
    accident clearance is linear around the neutral allocation ``B / n``;
    ``d_x`` and ``d_y`` default to the budgets.

    Several published rate sets have ``rho > 1``, which makes the
    accident-to-congestion rate ``(1 - rho)(zeta + phi)`` negative and drives
    ``I`` below zero. With ``clamp_jam`` (the default) that factor is floored
    at zero; set it to False for the unclamped equations.
    """

    model_id = "sair2"
    compartments = COMPARTMENTS
    control_names = ("treatment", "prevention")
    dynamic_params = ("alpha_f", "beta_f", "rho_f", "zeta_f", "alpha_w", "beta_w", "rho_w", "zeta_w", "theta")

    alpha_f: float = 0.531
    beta_f: float = 0.578
    rho_f: float = 1.126
    zeta_f: float = 0.569
    alpha_w: float = 3.966
    beta_w: float = 1.585
    rho_w: float = 0.411
    zeta_w: float = 4.835
    theta: float = 10.354
    n_segments: int = 5
    budget_treatment: float = 5.0
    budget_prevention: float = 5.0
    d_x: float | None = None
    d_y: float | None = None
    c_i: float = 1.0
    c_a: float = 0.5
    c_aw: float = 0.5
    clamp_jam: bool = True

    def __post_init__(self):
        for name in self.dynamic_params:
            if getattr(self, name) < 0:
                raise ValueError(f"2-SAIR rate {name} must be non-negative")

    @property
    def dx(self) -> float:
        return self.budget_treatment if self.d_x is None else self.d_x

    @property
    def dy(self) -> float:
        return self.budget_prevention if self.d_y is None else self.d_y

    def psi(self, treatment, zeta):
        return self.n_segments * zeta / (2.0 * self.dx) * (treatment - self.budget_treatment / self.n_segments)

    def phi(self, prevention, zeta):
        return self.n_segments * zeta / (2.0 * self.dy) * (prevention - self.budget_prevention / self.n_segments)

    def derivative(self, states, controls, epoch, t=0.0):
        x = states
        x1 = controls[:, 0]
        x2 = controls[:, 1]
        exposure = x[:, I] + x[:, A] + x[:, AW]
        clear_f = self.rho_f * (self.zeta_f + self.psi(x1, self.zeta_f)) * x[:, A]
        clear_w = self.rho_w * (self.zeta_w + self.psi(x1, self.zeta_w)) * x[:, AW]
        keep_f = max(1.0 - self.rho_f, 0.0) if self.clamp_jam else 1.0 - self.rho_f
        keep_w = max(1.0 - self.rho_w, 0.0) if self.clamp_jam else 1.0 - self.rho_w
        jam_f = keep_f * (self.zeta_f + self.phi(x2, self.zeta_f)) * x[:, A]
        jam_w = keep_w * (self.zeta_w + self.phi(x2, self.zeta_w)) * x[:, AW]
        out = np.empty_like(x)
        out[:, S] = -self.alpha_f * x[:, S] * exposure - self.beta_f * x[:, S] + clear_f
        out[:, A] = self.beta_f * x[:, S] - clear_f - jam_f
        out[:, W] = -self.alpha_w * x[:, W] * exposure - self.beta_w * x[:, W] + clear_w
        out[:, AW] = self.beta_w * x[:, W] - clear_w - jam_w
        out[:, R] = self.theta * x[:, I]
        out[:, I] = -(out[:, S] + out[:, W] + out[:, A] + out[:, AW] + out[:, R])
        return out

    def running_cost(self, states, epoch):
        return self.c_i * states[:, I] + self.c_a * states[:, A] + self.c_aw * states[:, AW]


def sair2_transition(state, treatment: float, prevention: float, params: Sair2Model) -> np.ndarray:
    """Derivative of one ``(S, W, A, A_w, I, R)`` state under the two vehicle rates."""
    if treatment < 0 or prevention < 0:
        raise ValueError("vehicle allocations must be non-negative")
    return params.derivative(np.asarray(state, dtype=float)[None, :], np.array([[treatment, prevention]]), 0)[0]


# Morning-period rates per region.
CITY_RATES_MORNING = {
    "West": (0.531, 0.578, 1.126, 0.569, 3.966, 1.585, 0.411, 4.835, 10.354),
    "Central": (0.000, 0.048, 0.034, 0.076, 1.224, 0.875, 1.180, 1.544, 2.135),
    "Northeast": (0.000, 0.137, 0.345, 0.078, 1.240, 0.198, 1.023, 2.273, 4.742),
    "East": (0.052, 0.041, 0.432, 0.086, 2.745, 3.086, 1.201, 1.934, 3.950),
    "North": (0.492, 0.562, 1.450, 2.043, 1.396, 0.896, 2.162, 1.878, 1.113),
}
CITY_RATES_AFTERNOON = {
    "West": (0.897, 0.180, 1.913, 3.180, 2.852, 1.321, 1.208, 3.444, 2.512),
    "Central": (0.862, 0.070, 3.259, 1.144, 1.098, 1.026, 0.338, 1.831, 3.477),
    "Northeast": (0.782, 0.024, 5.786, 0.283, 1.215, 2.360, 0.002, 3.555, 1.381),
    "East": (0.838, 0.115, 2.143, 1.260, 0.000, 0.288, 0.000, 0.137, 1.283),
    "North": (1.538, 0.196, 1.856, 1.656, 0.987, 1.085, 0.996, 0.930, 1.111),
}
CITY_RATES_EVENING = {
    "West": (0.091, 0.448, 1.249, 1.176, 0.568, 0.990, 2.194, 1.264, 3.775),
    "Central": (0.024, 0.331, 1.176, 0.793, 0.068, 0.733, 1.873, 1.335, 3.350),
    "Northeast": (0.018, 0.304, 1.247, 1.326, 0.116, 1.514, 1.728, 1.123, 2.861),
    "East": (0.603, 0.191, 2.255, 1.141, 0.962, 0.985, 1.527, 1.517, 6.799),
    "North": (0.001, 0.580, 0.905, 0.698, 1.148, 1.110, 1.136, 1.142, 4.264),
}
CITY_RATES = {"morning": CITY_RATES_MORNING, "afternoon": CITY_RATES_AFTERNOON, "evening": CITY_RATES_EVENING}
RATE_NAMES = ("alpha_f", "beta_f", "rho_f", "zeta_f", "alpha_w", "beta_w", "rho_w", "zeta_w", "theta")


def city_rates_model(period: str, region: str, **kwargs) -> Sair2Model:
    rates = dict(zip(RATE_NAMES, CITY_RATES[period][region]))
    return Sair2Model(**rates, **kwargs)
