import numpy as np
import pytest

from cbnp import ode
from cbnp.instance import Segment, evaluate_plan, lives_saved_objective, raw_plan_cost
from cbnp.models import BassModel, DelphiV, Sair2Model, model_from_dict, model_to_dict, city_rates_model
from cbnp.models.bass import bass_transition
from cbnp.models.delphi import D, P0, P1, initial_state, delphi_v_transition
from cbnp.models.sair import CITY_RATES, sair2_transition


def test_delphi_no_infection_flows():
    x = np.zeros(11)
    x[0], x[1], x[3] = 0.9, 0.05, 0.02
    dx = delphi_v_transition(x, 0.0, P0)
    assert dx[0] == 0.0
    assert dx[1] == pytest.approx(-P0.r_i * 0.05)
    assert dx[2] == pytest.approx(P0.r_i * 0.05)
    assert dx[6] == pytest.approx(P0.r_death * 0.02)


def test_delphi_zero_state_is_equilibrium():
    assert np.all(delphi_v_transition(np.zeros(11), 0.0, P1) == 0.0)


def test_delphi_susceptible_rate_formula():
    x = np.zeros(11)
    x[0], x[2] = 0.9, 0.01
    dx = delphi_v_transition(x, 0.0, P0)
    assert dx[0] == pytest.approx(-P0.alpha * P0.gamma * 0.9 * 0.01, rel=1e-14)


def test_delphi_rejects_negative_vaccines():
    with pytest.raises(ValueError):
        delphi_v_transition(initial_state(), -1.0, P0)


def test_delphi_vaccination_reduces_deaths():
    grid = ode.EpochGrid.uniform(4, 7.0)
    seg = Segment("r", DelphiV(population=1e6), initial_state(0.02, 0.01), [[[0.0], [50000.0]]] * 4)
    none = raw_plan_cost(seg, [[0.0]] * 4, grid)
    full = raw_plan_cost(seg, [[50000.0]] * 4, grid)
    assert full < none


@pytest.mark.parametrize("bad", [{"alpha": -0.1}, {"beta": 1.5}, {"pallet": 0}, {"r_u": (0.1, -0.2)}])
def test_delphi_parameter_validation(bad):
    with pytest.raises(ValueError):
        DelphiV(**bad)


def test_bass_fixed_points_and_closure():
    model = BassModel(alpha=0.4, beta=0.3)
    assert np.all(bass_transition([0.0, 0.0], 0.0, model) == 0.0)
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = bass_transition(rng.uniform(0, 1, 2), rng.uniform(0, 1), model)
        assert d[0] + d[1] == pytest.approx(0.0, abs=1e-15)
    assert bass_transition([1.0, 0.0], 1.0, model)[1] == pytest.approx(0.4)
    with pytest.raises(ValueError):
        bass_transition([1.0, 0.0], 1.5, model)


def test_bass_promotion_lowers_cost():
    grid = ode.EpochGrid.uniform(3, 1.0)
    dec = [np.array([[0.0, 0.0], [1.0, 1.0]])] * 3
    seg = Segment("p", BassModel(), [0.95, 0.05], dec)
    assert raw_plan_cost(seg, [[1.0, 1.0]] * 3, grid) < raw_plan_cost(seg, [[0.0, 0.0]] * 3, grid)


def test_sair_closure_and_table_value():
    model = city_rates_model("morning", "West", n_segments=4, budget_treatment=4.0, budget_prevention=4.0)
    for v, name in zip((0.531, 0.578, 1.126, 0.569, 3.966, 1.585, 0.411, 4.835, 10.354),
                       ("alpha_f", "beta_f", "rho_f", "zeta_f", "alpha_w", "beta_w", "rho_w", "zeta_w", "theta")):
        assert getattr(model, name) == v
    d = sair2_transition([1, 0, 0, 0, 0, 0], 1.0, 1.0, model)
    assert d[2] == pytest.approx(0.578)
    rng = np.random.default_rng(3)
    for _ in range(20):
        d = sair2_transition(rng.uniform(0, 1, 6), rng.uniform(0, 3), rng.uniform(0, 3), model)
        assert abs(d.sum()) < 1e-14


def test_sair_neutral_allocation_zeroes_interventions():
    model = city_rates_model("evening", "East", n_segments=5, budget_treatment=10.0, budget_prevention=5.0)
    assert model.psi(2.0, model.zeta_f) == 0.0 and model.phi(1.0, model.zeta_w) == 0.0


def test_sair_table_rates_keep_states_nonnegative():
    grid = ode.EpochGrid.uniform(3, 1.0)
    for period, table in CITY_RATES.items():
        for region in table:
            model = city_rates_model(period, region, n_segments=3, budget_treatment=3.0, budget_prevention=3.0)
            tr = ode.integrate(model, [0.8, 0.1, 0.05, 0.0, 0.05, 0.0], [[3.0, 0.0], [0.0, 3.0], [1.0, 1.0]], grid)
            assert tr.states.min() > -1e-12, (period, region)


def test_sair_running_cost_against_trapezoid_oracle():
    model = city_rates_model("morning", "West", n_segments=3, budget_treatment=3.0, budget_prevention=3.0)
    grid = ode.EpochGrid.uniform(2, 1.0, substeps=50)
    tr = ode.integrate(model, [0.75, 0.1, 0.05, 0.0, 0.1, 0.0], [[1.0, 1.0]] * 2, grid)
    g = model.c_i * tr.states[:, 4] + model.c_a * tr.states[:, 2] + model.c_aw * tr.states[:, 3]
    assert tr.running_cost == pytest.approx(np.trapezoid(g, tr.times), rel=1e-12)


def test_savings_baseline_cancels():
    grid = ode.EpochGrid.uniform(2, 7.0)
    seg = Segment("r", P0, initial_state(), [[[0.0], [10000.0]]] * 2)
    seg.baseline = raw_plan_cost(seg, seg.do_nothing(), grid)
    assert evaluate_plan(seg, seg.do_nothing(), grid) == 0.0


def test_lives_saved_subtraction():
    assert lives_saved_objective([0.05], [0.03]) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        lives_saved_objective([1.0], [0.5], ode.EpochGrid.uniform(2), ode.EpochGrid.uniform(3))


@pytest.mark.parametrize("model", [P1, BassModel(alpha=0.2), city_rates_model("afternoon", "North")])
def test_model_dict_round_trip(model):
    assert model_from_dict(model_to_dict(model)) == model


def test_perturbation_scales_only_dynamic_parameters():
    rng = np.random.default_rng(0)
    p = P0.perturbed(rng, 0.2)
    assert p.c_d == P0.c_d and p.population == P0.population
    assert 0.8 * P0.alpha <= p.alpha <= 1.2 * P0.alpha
    assert P0.perturbed(np.random.default_rng(0), 0.0) == P0


def test_perturbed_effectiveness_stays_a_probability():
    m = DelphiV(beta=0.95)
    betas = [m.perturbed(np.random.default_rng(k), 0.2).beta for k in range(200)]
    assert max(betas) == 1.0 and min(betas) >= 0.8 * 0.95
