from dataclasses import dataclass

import numpy as np
import pytest

from cbnp import ode
from cbnp.models import AffineModel, DelphiV
from cbnp.models.base import DynamicalModel
from cbnp.models.delphi import P0, initial_state


@dataclass(frozen=True)
class _Still(DynamicalModel):
    compartments = ("x", "y")
    control_names = ("u",)

    def derivative(self, states, controls, epoch, t=0.0):
        return np.zeros_like(states)

    def running_cost(self, states, epoch):
        return np.ones(states.shape[0])


@dataclass(frozen=True)
class _Blowup(DynamicalModel):
    compartments = ("x",)
    control_names = ("u",)

    def derivative(self, states, controls, epoch, t=0.0):
        return states ** 2


def test_constant_dynamics_unit_running_cost():
    grid = ode.EpochGrid.uniform(2, 1.0)
    tr = ode.integrate(_Still(), [0.3, -1.2], [[0.0], [0.0]], grid)
    assert np.array_equal(tr.terminal_state, [0.3, -1.2])
    assert tr.running_cost == pytest.approx(2.0, abs=1e-12)


def test_exponential_decay_closed_form():
    model = AffineModel(A=((-1.0,),))
    grid = ode.EpochGrid((0.0, 1.0), substeps=100)
    tr = ode.integrate(model, [1.0], [[0.0]], grid)
    assert abs(tr.terminal_state[0] - np.exp(-1.0)) < 1e-8


def test_delphi_matches_fine_euler():
    m0 = initial_state(0.02, 0.01)
    grid = ode.EpochGrid((0.0, 1.0), substeps=40)
    tr = ode.integrate(P0, m0, [[0.0]], grid)
    # explicit Euler with h = 1e-5 written out on the scalar equations
    s, e, i, u, h, q, d = m0[:7]
    m = 0.0
    ag, ri, rd = P0.alpha * P0.gamma, P0.r_i, P0.r_death
    ru, rh, rq = P0.r_u, P0.r_h, P0.r_q
    step = 1e-5
    for _ in range(100_000):
        inf = ag * s * i
        s, e, i, u, h, q, d = (s - step * inf, e + step * (inf - ri * e), i + step * (ri * e - (ru + rh + rq) * i),
                               u + step * (ru * i - rd * u), h + step * (rh * i - rd * h),
                               q + step * (rq * i - rd * q), d + step * rd * (u + h + q))
    oracle = np.array([s, e, i, u, h, q, d])
    assert np.max(np.abs(tr.terminal_state[:7] - oracle)) < 1e-5
    assert tr.terminal_state[10] == m


def test_substep_sampling_shape():
    grid = ode.EpochGrid.uniform(3, 2.0, substeps=5)
    tr = ode.integrate(P0, initial_state(), [[0.0]] * 3, grid)
    assert tr.states.shape == (3 * 5 + 1, 11)
    assert tr.times[0] == 0.0 and tr.times[-1] == 6.0
    assert len(tr.epoch_costs) == 3


def test_batched_propagation_matches_single():
    grid = ode.EpochGrid.uniform(1, 7.0)
    model = DelphiV(population=1e5)
    states = np.stack([initial_state(0.01), initial_state(0.03, 0.02)])
    controls = np.array([[0.0], [20000.0]])
    nxt, _ = ode.propagate(model, states, controls, grid, 0)
    for b in range(2):
        one = ode.integrate(model, states[b], [controls[b]], grid)
        assert np.allclose(nxt[b], one.terminal_state, atol=1e-14)


def test_divergence_is_reported():
    grid = ode.EpochGrid.uniform(2, 1.0, substeps=50)
    with pytest.raises(ode.DivergenceError) as err:
        ode.integrate(_Blowup(), [5.0], [[0.0], [0.0]], grid)
    assert err.value.epoch == 0


@pytest.mark.parametrize("stamps", [(0.0,), (0.0, 1.0, 1.0), (1.0, 0.5)])
def test_bad_grids_rejected(stamps):
    with pytest.raises(ValueError):
        ode.EpochGrid(stamps)


def test_wrong_control_count_rejected():
    with pytest.raises(ValueError):
        ode.integrate(P0, initial_state(), [[0.0]], ode.EpochGrid.uniform(2))
