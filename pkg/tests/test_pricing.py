import itertools

import numpy as np
import pytest

from cbnp import fixtures, ode, pricing
from cbnp.instance import Segment, evaluate_plan, raw_plan_cost
from cbnp.models import AffineModel, BassModel
from cbnp.models.delphi import P0, initial_state


def _affine_segment(rng, S=3, D=3, dim=2):
    A = rng.uniform(-0.5, 0.3, size=(dim, dim))
    H = rng.uniform(-1, 1, size=(dim, dim))
    model = AffineModel(tuple(map(tuple, A)), tuple(map(tuple, rng.uniform(0.2, 1, size=(dim, 1)))),
                        tuple(rng.uniform(-0.2, 0.2, dim)), tuple(rng.uniform(-1, 1, dim)),
                        tuple(rng.uniform(-1, 1, dim)), tuple(map(tuple, 0.5 * (H + H.T))))
    dec = [np.sort(rng.choice(6, size=D, replace=False)).astype(float)[:, None] for _ in range(S)]
    return Segment("seg", model, rng.uniform(-1, 1, dim), dec)


def _enumerate_costs(seg, grid, adjust=None):
    """Oracle: simulate every decision sequence on its own."""
    out = {}
    for idx in itertools.product(*[range(len(d)) for d in seg.decisions]):
        plan = np.array([seg.decisions[s][k] for s, k in enumerate(idx)])
        c = raw_plan_cost(seg, plan, grid) - seg.baseline
        if adjust is not None:
            c += sum(adjust[s][k] for s, k in enumerate(idx))
        out[idx] = c
    return out


def test_enumeration_state_counts():
    grid = ode.EpochGrid.uniform(4, 1.0, substeps=2)
    seg = Segment("s", AffineModel(), [0.0], [np.arange(6.0)[:, None]] * 4)
    sp = pricing.forward_enumerate(seg, grid)
    assert sp.level_sizes() == [1, 6, 36, 216, 1296]
    assert sp.n_states == 1555


def test_enumeration_single_decision():
    grid = ode.EpochGrid.uniform(1)
    seg = Segment("s", P0, initial_state(), [[[0.0]]])
    assert pricing.forward_enumerate(seg, grid).n_states == 2


def test_enumeration_cap():
    grid = ode.EpochGrid.uniform(4, 1.0, substeps=1)
    seg = Segment("s", AffineModel(), [0.0], [np.arange(11.0)[:, None]] * 4)
    with pytest.raises(pricing.SizeError):
        pricing.forward_enumerate(seg, grid, cap=1000)


def test_zero_duals_give_cheapest_plan():
    rng = np.random.default_rng(11)
    grid = ode.EpochGrid.uniform(3, 1.0, substeps=10)
    seg = _affine_segment(rng)
    costs = _enumerate_costs(seg, grid)
    assert len(costs) == 27
    res = pricing.backward_induct(pricing.forward_enumerate(seg, grid), seg)
    best = min(costs, key=costs.get)
    assert res.reduced_cost == pytest.approx(costs[best], abs=1e-9)
    assert tuple(res.indices) == best
    assert res.dp_cost == pytest.approx(evaluate_plan(seg, res.decisions, grid), abs=1e-9)


def test_convexity_dual_shift():
    rng = np.random.default_rng(12)
    grid = ode.EpochGrid.uniform(3, 1.0, substeps=10)
    seg = _affine_segment(rng)
    sp = pricing.forward_enumerate(seg, grid)
    base = pricing.backward_induct(sp, seg)
    shifted = pricing.backward_induct(sp, seg, mu=1e9)
    assert shifted.reduced_cost == pytest.approx(base.reduced_cost - 1e9, abs=1e-5)
    assert shifted.reduced_cost < 0


def test_subsidised_epoch_takes_largest_decision():
    rng = np.random.default_rng(13)
    grid = ode.EpochGrid.uniform(3, 1.0, substeps=10)
    seg = _affine_segment(rng)
    lam = 1e3
    # a >= row on the epoch-0 decision with dual lam contributes -lam * x to the reduced cost
    adjust = [-lam * seg.decisions[0][:, 0], np.zeros(3), np.zeros(3)]
    res = pricing.backward_induct(pricing.forward_enumerate(seg, grid), seg, adjust)
    costs = _enumerate_costs(seg, grid, adjust)
    best = min(costs, key=costs.get)
    assert tuple(res.indices) == best
    assert res.indices[0] == 2
    assert res.reduced_cost == pytest.approx(costs[best], abs=1e-9)


def test_bellman_residual_zero():
    seg = fixtures.vaccine_instance(n=1, n_epochs=3, levels=4).segments[0]
    grid = ode.EpochGrid.uniform(3, 7.0)
    sp = pricing.forward_enumerate(seg, grid)
    adjust = [np.linspace(0, -50, 4) for _ in range(3)]
    res = pricing.backward_induct(sp, seg, adjust)
    assert pricing.bellman_residual(sp, res, adjust) < 1e-9


def test_stream_cluster_one_dimensional():
    st = pricing.stream_cluster([0.0, 0.3, 1.0, 0.5, 2.0], 0.6)
    assert st.labels.tolist() == [0, 0, 1, 0, 2]
    assert np.allclose(st.centroids[:, 0], [0.8 / 3, 1.0, 2.0])
    assert np.all(st.diameters <= 0.6)


def test_identical_successors_single_cluster():
    model = AffineModel(A=((-0.3,),), B=((0.0,),))
    seg = Segment("s", model, [0.7], [np.arange(4.0)[:, None]] * 3)
    sp = pricing.cluster_states(seg, ode.EpochGrid.uniform(3), 1e-9)
    exact = pricing.forward_enumerate(seg, ode.EpochGrid.uniform(3))
    for s in range(1, 4):
        assert sp.level_sizes()[s] == 1
        assert np.allclose(sp.states[s][0], exact.states[s][0], atol=1e-15)


def test_zero_tolerance_reproduces_exact_dp():
    seg = fixtures.vaccine_instance(n=1, n_epochs=3, levels=4).segments[0]
    grid = ode.EpochGrid.uniform(3, 7.0)
    exact = pricing.forward_enumerate(seg, grid)
    clus = pricing.cluster_states(seg, grid, 0.0)
    assert clus.level_sizes() == exact.level_sizes()
    adjust = [np.linspace(0, -30, 4) for _ in range(3)]
    a = pricing.backward_induct(exact, seg, adjust, mu=2.0)
    b = pricing.backward_induct(clus, seg, adjust, mu=2.0)
    assert a.reduced_cost == b.reduced_cost
    assert np.array_equal(a.indices, b.indices)


def test_clustered_diameters_and_counts_shrink():
    seg = fixtures.content_instance(n=1, n_epochs=3).segments[0]
    grid = ode.EpochGrid.uniform(3, 1.0)
    exact = pricing.forward_enumerate(seg, grid)
    sp = pricing.cluster_states(seg, grid, 0.01)
    assert sp.n_states < exact.n_states
    for level, k, q, diam in pricing.cluster_report(sp):
        assert diam <= 0.01 and k <= q


def test_negative_tolerance_rejected():
    seg = fixtures.content_instance(n=1).segments[0]
    with pytest.raises(ValueError):
        pricing.cluster_states(seg, ode.EpochGrid.uniform(3), -0.1)


def test_kmeans_degenerate_counts():
    pts = np.array([[0.0], [0.3], [1.0], [0.5], [2.0]])
    rng = np.random.default_rng(0)
    labels = pricing.kmeans_labels(pts, 5, rng)
    assert len(set(labels.tolist())) == 5
    assert pricing.kmeans_labels(pts, 1, rng).tolist() == [0] * 5
    st = pricing._stats_from_labels(pts, np.zeros(5, dtype=int), 1)
    assert st.centroids[0, 0] == pytest.approx(pts.mean())


def test_kmeans_versus_stream_on_small_stream():
    pts = np.array([[0.0], [0.3], [1.0], [0.5], [2.0]])
    linf = pricing.stream_cluster(pts, 0.6)
    labels = pricing.kmeans_labels(pts, len(linf.eta), np.random.default_rng(0))
    km = pricing._stats_from_labels(pts, labels, labels.max() + 1)
    assert km.mean_member_distance(pts) <= linf.mean_member_distance(pts) + 1e-12


def test_kmeans_space_uses_requested_counts():
    seg = fixtures.content_instance(n=1).segments[0]
    grid = ode.EpochGrid.uniform(3, 1.0)
    sp = pricing.kmeans_cluster(seg, grid, [3, 5, 7], seed=4)
    assert sp.level_sizes() == [1, 3, 5, 7]
    again = pricing.kmeans_cluster(seg, grid, [3, 5, 7], seed=4)
    assert all(np.array_equal(a, b) for a, b in zip(sp.states, again.states))


def test_error_bound_holds_on_small_segment():
    seg = fixtures.vaccine_instance(n=1, n_epochs=3, levels=4).segments[0]
    checks = pricing.error_bound_check(seg, ode.EpochGrid.uniform(3, 7.0), 0.002)
    assert all(c.ok for c in checks)
    assert [c.level for c in checks] == [1, 2, 3]
