"""Fixed-step RK4 integration of segment dynamics under piecewise-constant controls.

All propagation routines are batched: ``states`` has shape ``(B, r)`` and
``controls`` shape ``(B, d)``, so one call advances many (state, decision)
pairs through the same epoch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_SUBSTEPS = 20
DIVERGENCE_THRESHOLD = 1e12


class DivergenceError(RuntimeError):
    """Raised when an integrated state becomes non-finite or exceeds the blow-up threshold."""

    def __init__(self, epoch: int, substep: int):
        super().__init__(f"state diverged in epoch {epoch} at substep {substep}")
        self.epoch = epoch
        self.substep = substep


@dataclass(frozen=True)
class EpochGrid:
    """Decision epochs [tau_s, tau_{s+1}] with a fixed number of RK4 substeps each."""

    timestamps: tuple[float, ...]
    substeps: int = DEFAULT_SUBSTEPS

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        object.__setattr__(self, "timestamps", ts)
        if len(ts) < 2:
            raise ValueError("epoch grid needs at least two timestamps")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("epoch grid timestamps must be strictly increasing")
        if int(self.substeps) < 1:
            raise ValueError("substeps must be a positive integer")

    @classmethod
    def uniform(cls, n_epochs: int, length: float = 1.0, substeps: int = DEFAULT_SUBSTEPS) -> "EpochGrid":
        return cls(tuple(length * k for k in range(n_epochs + 1)), substeps)

    @property
    def n_epochs(self) -> int:
        return len(self.timestamps) - 1

    @property
    def horizon(self) -> float:
        return self.timestamps[-1] - self.timestamps[0]

    def length(self, s: int) -> float:
        return self.timestamps[s + 1] - self.timestamps[s]

    def substep_times(self) -> np.ndarray:
        """All substep boundaries over the horizon, ``S * substeps + 1`` points."""
        pieces = [np.linspace(a, b, self.substeps + 1)[:-1] for a, b in zip(self.timestamps, self.timestamps[1:])]
        return np.concatenate(pieces + [np.array([self.timestamps[-1]])])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (S * substeps + 1, r)
    running_cost: float
    epoch_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]


def _check(states: np.ndarray, epoch: int, substep: int) -> None:
    if not np.all(np.isfinite(states)) or np.any(np.abs(states) > DIVERGENCE_THRESHOLD):
        raise DivergenceError(epoch, substep)


def control_rate(model, controls: np.ndarray, epoch_length: float) -> np.ndarray:
    """Convert raw decisions into the control signal seen by the vector field."""
    controls = np.asarray(controls, dtype=float)
    if getattr(model, "rate_normalized", False):
        return controls / epoch_length
    return controls


def propagate(model, states, controls, grid: EpochGrid, epoch: int, record: bool = False):
    """Advance a batch of states through one epoch.

    Returns ``(next_states, running_costs)`` and, when ``record`` is set, the
    substep samples of shape ``(substeps + 1, B, r)`` as a third element.
    The running cost uses the trapezoid rule on the substep grid.
    """
    x = np.array(states, dtype=float, ndmin=2)
    u = control_rate(model, np.array(controls, dtype=float, ndmin=2), grid.length(epoch))
    n = grid.substeps
    h = grid.length(epoch) / n
    t = grid.timestamps[epoch]
    f = model.derivative
    g_prev = model.running_cost(x, epoch)
    cost = np.zeros(x.shape[0])
    samples = [x] if record else None
    for j in range(n):
        tj = t + j * h
        k1 = f(x, u, epoch, tj)
        k2 = f(x + 0.5 * h * k1, u, epoch, tj + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, u, epoch, tj + 0.5 * h)
        k4 = f(x + h * k3, u, epoch, tj + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check(x, epoch, j + 1)
        g_next = model.running_cost(x, epoch)
        cost += 0.5 * h * (g_prev + g_next)
        g_prev = g_next
        if record:
            samples.append(x)
    if record:
        return x, cost, np.stack(samples)
    return x, cost


def integrate(model, m0, controls, grid: EpochGrid) -> Trajectory:
    """Integrate one segment over the whole horizon.

    ``controls`` holds one decision vector per epoch. The first recorded
    sample is ``m0`` itself.
    """
    m0 = np.asarray(m0, dtype=float).reshape(-1)
    if m0.shape[0] != model.dim:
        raise ValueError(f"initial state has dimension {m0.shape[0]}, model expects {model.dim}")
    controls = [np.atleast_1d(np.asarray(c, dtype=float)) for c in controls]
    if len(controls) != grid.n_epochs:
        raise ValueError(f"expected {grid.n_epochs} per-epoch decisions, got {len(controls)}")
    _check(m0, 0, 0)
    x = m0[None, :]
    parts = [x]
    epoch_costs = np.zeros(grid.n_epochs)
    for s, c in enumerate(controls):
        x, cost, samples = propagate(model, x, c[None, :], grid, s, record=True)
        parts.append(samples[1:, 0, :].reshape(-1, model.dim))
        epoch_costs[s] = cost[0]
        x = x.reshape(1, -1)
    states = np.concatenate(parts, axis=0)
    states[0] = m0
    return Trajectory(grid.substep_times(), states, float(epoch_costs.sum()), epoch_costs)
