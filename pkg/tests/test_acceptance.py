"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the result lines are printed
even when output capture is on.
"""
import itertools
import time

import numpy as np
import pytest

from cbnp import benchmarks, fixtures, io, ode, pricing
from cbnp.colgen import ColumnGeneration, Duals, allowed_sets
from cbnp.instance import all_plans, brute_force, evaluate_plan, solution_cost
from cbnp.models.sair import CITY_RATES
from cbnp.tree import solve_tree

EPS_SWEEP = (0.002, 0.005, 0.01)
DESKS = ("vaccine_desk", "content_desk", "congestion_desk", "facility_desk")


def _report(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {title} | {detail}")
    assert ok, detail


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_state_counts(capsys):
    counts, t0 = {}, time.perf_counter()
    for D in (6, 11):
        inst = fixtures.vaccine_instance(n=51, n_epochs=4, levels=D, seed=1)
        grid = inst.grid_for_solver()
        counts[D] = sum(pricing.forward_enumerate(seg, grid).n_states for seg in inst.segments)
    elapsed = time.perf_counter() - t0
    ok = counts[6] == 79_305 and counts[11] == 821_355 and elapsed < 60
    _report(capsys, 1, "exact enumeration state counts", ok,
            f"D=6: {counts[6]}, D=11: {counts[11]}, {elapsed:.1f}s")


# -- 2 ------------------------------------------------------------------------

def _random_desk(k: int):
    rng = np.random.default_rng([2, k])
    kind = k % 4
    if kind == 0:
        return fixtures.vaccine_instance(n=2, n_epochs=3, levels=4, budget_pallets=4, seed=k)
    if kind == 1:
        return fixtures.content_instance(n=3, n_epochs=3, seed=k)
    if kind == 2:
        period = list(CITY_RATES)[int(rng.integers(3))]
        regions = tuple(rng.choice(list(CITY_RATES[period]), size=2, replace=False))
        return fixtures.congestion_instance(regions, period, n_epochs=3, budget=(2, 2), seed=k)
    return fixtures.facility_instance(n=2, n_facilities=2, K=1, n_epochs=3, levels=3, budget_pallets=3, seed=k)


def test_criterion_2_cluster_diameters(capsys):
    n_inst, n_clusters, violations = 0, 0, 0
    for k in range(104):
        inst = _random_desk(k)
        grid = inst.grid_for_solver()
        n_inst += 1
        for eps in EPS_SWEEP:
            for seg in inst.segments:
                sp = pricing.cluster_states(seg, grid, eps)
                for s, st in enumerate(sp.clusters):
                    pts = sp.candidates[s]
                    # recompute every envelope from the raw members
                    for j in range(len(st.eta)):
                        members = pts[st.labels == j]
                        n_clusters += 1
                        if np.max(members.max(axis=0) - members.min(axis=0)) > eps:
                            violations += 1
    ok = n_inst >= 100 and violations == 0
    _report(capsys, 2, "cluster diameter <= eps", ok,
            f"{n_inst} instances x {len(EPS_SWEEP)} tolerances, {n_clusters} clusters, {violations} violations")


# -- 3 ------------------------------------------------------------------------

def _dp_instance(k: int):
    rng = np.random.default_rng([3, k])
    S = int(rng.integers(2, 5))
    if k % 5 == 3:
        return fixtures.content_instance(n=2, n_epochs=S, K=1, increment=1 / 3, seed=k), rng
    if k % 5 == 4:
        return fixtures.congestion_instance(("West", "North"), "evening", n_epochs=S, budget=(1, 1), seed=k), rng
    levels = int(rng.integers(2, 5))
    return fixtures.random_generic(rng, n=2, n_epochs=S, levels=levels, dim=int(rng.integers(1, 3))), rng


def test_criterion_3_dp_exactness(capsys):
    worst, checks = 0.0, 0
    for k in range(50):
        inst, rng = _dp_instance(k)
        assert inst.n_epochs <= 4 and max(len(d) for seg in inst.segments for d in seg.decisions) <= 4
        grid = inst.grid_for_solver()
        cg = ColumnGeneration(inst)
        allowed = allowed_sets(inst, ())
        plans = [all_plans(seg) for seg in inst.segments]
        costs = [np.array([evaluate_plan(seg, p, grid) for p in ps]) for seg, ps in zip(inst.segments, plans)]
        for _ in range(10):
            lam = np.array([rng.uniform(-2, 2) if row.sense == "=" else rng.uniform(0, 2) for row in inst.rows])
            mu = rng.uniform(-3, 3, inst.n)
            for i, seg in enumerate(inst.segments):
                # oracle: reduced cost of every decision sequence from the row definitions
                acts = np.array([[row.sign * row.plan_activity(i, p) for row in inst.rows] for p in plans[i]])
                oracle = float(np.min(costs[i] - acts @ lam - mu[i]))
                dp = cg.price(i, allowed, Duals(lam, mu)).reduced_cost
                worst = max(worst, abs(dp - oracle))
                checks += 1
    ok = worst <= 1e-9
    _report(capsys, 3, "DP equals brute force", ok, f"50 instances x 10 dual vectors, {checks} segment checks, "
            f"max |DP - oracle| = {worst:.2e}")


# -- 4 ------------------------------------------------------------------------

def _bnp_instance(k: int):
    rng = np.random.default_rng([4, k])
    if k % 6 == 4:
        return fixtures.content_instance(n=3, n_epochs=2, K=1, seed=k, config=fixtures.SolverConfig(gap=0.0))
    if k % 6 == 5:
        return fixtures.congestion_instance(("Central", "East"), "afternoon", n_epochs=2, budget=(1, 2), seed=k,
                                            config=fixtures.SolverConfig(gap=0.0))
    n = int(rng.integers(2, 4))
    S = int(rng.integers(2, 4))
    levels = 3 if n * S <= 6 else 2
    return fixtures.random_generic(rng, n=n, n_epochs=S, levels=levels, dim=int(rng.integers(1, 3)))


def test_criterion_4_bnp_exactness(capsys):
    t0 = time.perf_counter()
    mismatches, nodes, gaps = [], 0, 0.0
    for k in range(25):
        inst = _bnp_instance(k).with_config(gap=0.0, clustering="none")
        joint = np.prod([len(all_plans(seg)) for seg in inst.segments])
        assert joint <= 100_000
        oracle = brute_force(inst)[0]
        sol = solve_tree(inst)
        nodes += len(sol.tree.nodes)
        gaps = max(gaps, sol.gap)
        if sol.status != "optimal" or sol.gap > 0 or abs(sol.objective - oracle) > 1e-9 * max(1.0, abs(oracle)):
            mismatches.append((k, sol.status, sol.objective, oracle))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 300
    _report(capsys, 4, "branch-and-price equals exhaustive enumeration", ok,
            f"25 instances, {nodes} nodes, max gap {gaps:.1e}, {elapsed:.1f}s, mismatches {mismatches}")


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_error_bound(capsys):
    instances = [io.load_shipped("vaccine_desk")] + [fixtures.vaccine_instance(seed=s) for s in (1, 2)]
    checks, violations, tight = 0, 0, 0.0
    for inst in instances:
        grid = inst.grid_for_solver()
        for eps in EPS_SWEEP:
            for seg in inst.segments:
                for c in pricing.error_bound_check(seg, grid, eps):
                    checks += 1
                    violations += not c.ok
                    tight = max(tight, c.max_distance / c.bound)
    ok = violations == 0
    _report(capsys, 5, "propagated clustering error bound (empirical Lipschitz constants)", ok,
            f"{checks} level checks, {violations} violations, max distance/bound = {tight:.3f}")


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_tripartite_necessity(capsys):
    bi = solve_tree(fixtures.tripartite_fixture().with_config(branching="bi"))
    tri = solve_tree(fixtures.tripartite_fixture())
    leaves = [n for n in bi.tree.nodes if n.status == "fractional"]
    frac_z = any(np.any((r.z > 1e-6) & (r.z < 1 - 1e-6))
                 for r in (bi.evaluator.results[n.id] for n in leaves))
    oracle = brute_force(fixtures.tripartite_fixture())[0]
    ok = (bi.status == "fractional" and frac_z and tri.status == "optimal" and tri.gap <= 1e-3
          and tri.incumbent is not None and abs(tri.objective - oracle) <= 1e-9)
    _report(capsys, 6, "tri-partite branching needed", ok,
            f"bi: {bi.status}, {len(leaves)} fractional leaves; tri: {tri.status}, gap {100 * tri.gap:.3f}%, "
            f"objective {tri.objective:g} (oracle {oracle:g}), {len(tri.tree.nodes)} nodes")


# -- 7 ------------------------------------------------------------------------

def _geq(a, b):
    return a >= b - 1e-9 * max(1.0, abs(b))


def test_criterion_7_benchmark_dominance(capsys):
    lines, ok = [], True
    for name in DESKS:
        inst = io.load_shipped(name)
        uni = benchmarks.uniform_allocation(inst)
        cost = benchmarks.cost_based_allocation(inst)
        opt = benchmarks.optimized(inst)
        good = all(r.feasible for r in (uni, cost, opt)) and _geq(opt.objective, cost.objective) \
            and _geq(cost.objective, uni.objective)
        lines.append(f"{name}: {opt.objective:.6g} >= {cost.objective:.6g} >= {uni.objective:.6g}")
        if inst.kind == "facility":
            tk_uni, tk_opt = benchmarks.top_k_reports(inst)
            good = good and _geq(opt.objective, tk_opt.objective) and _geq(tk_opt.objective, tk_uni.objective)
            lines.append(f"top-K: {opt.objective:.6g} >= {tk_opt.objective:.6g} >= {tk_uni.objective:.6g}")
        ok = ok and good
    _report(capsys, 7, "optimized >= cost-based >= uniform savings", ok, "; ".join(lines))


# -- 8 ------------------------------------------------------------------------

def _spread(space):
    """Euclidean member-to-centroid distances and the largest l-infinity cluster diameter."""
    dist, diam = [], 0.0
    for s, st in enumerate(space.clusters):
        pts = space.candidates[s]
        dist.append(np.linalg.norm(pts - st.centroids[st.labels], axis=1))
        diam = max(diam, float(st.diameters.max()))
    return np.concatenate(dist), diam


def test_criterion_8_linf_versus_kmeans(capsys):
    spread_ok, better, total, detail = [], 0, 0, []
    for name in DESKS:
        inst = io.load_shipped(name)
        grid = inst.grid_for_solver()
        for eps in EPS_SWEEP:
            dl, dk, wl, wk = [], [], 0.0, 0.0
            for seg in inst.segments:
                li = pricing.cluster_states(seg, grid, eps)
                km = pricing.kmeans_cluster(seg, grid, [len(c.eta) for c in li.clusters], seed=inst.config.seed)
                assert km.level_sizes() == li.level_sizes()
                a, wa = _spread(li)
                b, wb = _spread(km)
                dl.append(a)
                dk.append(b)
                wl, wk = max(wl, wa), max(wk, wb)
            ml, mk = np.concatenate(dl).mean(), np.concatenate(dk).mean()
            spread_ok.append(mk < ml and wl < wk)
            vals = []
            for mode in ("linf", "kmeans"):
                sol = solve_tree(inst.with_config(clustering=mode, eps=eps))
                inc = sol.incumbent
                vals.append(solution_cost(inst, inc.plans, inc.aux if len(inst.aux) else None))
            total += 1
            better += vals[0] <= vals[1] + 1e-9 * max(1.0, abs(vals[1]))
            detail.append(f"{name}@{eps}: mean {ml:.2e}/{mk:.2e} diam {wl:.2e}/{wk:.2e} "
                          f"cost {vals[0]:.6g}/{vals[1]:.6g}")
    share = better / total
    ok = all(spread_ok) and share >= 0.8
    _report(capsys, 8, "l-inf vs k-means at matched counts", ok,
            f"spread trend on {sum(spread_ok)}/{len(spread_ok)} fixtures, l-inf objective no worse on "
            f"{better}/{total} ({100 * share:.0f}%); " + "; ".join(detail))


# -- 9 ------------------------------------------------------------------------

def test_criterion_9_perturbation_ranking(capsys):
    inst = io.load_shipped("vaccine_desk")
    opt = benchmarks.optimized(inst)
    cost = benchmarks.cost_based_allocation(inst)
    po = benchmarks.perturb_and_evaluate(inst, opt.plans, 0.2, 20)
    pc = benchmarks.perturb_and_evaluate(inst, cost.plans, 0.2, 20)
    again = benchmarks.perturb_and_evaluate(inst, opt.plans, 0.2, 20)
    deterministic = np.array_equal(po.values, again.values)
    ok = po.mean > pc.mean and deterministic and po.failed == 0 and pc.failed == 0
    _report(capsys, 9, "ranking preserved under 20% perturbation", ok,
            f"mean savings optimized {po.mean:.6g} vs cost-based {pc.mean:.6g}, deterministic {deterministic}")


# -- 10 -----------------------------------------------------------------------

def test_criterion_10_conservation(capsys):
    worst, runs = 0.0, 0
    rng = np.random.default_rng(10)
    for name in DESKS:
        inst = fixtures.DESK_BUILDERS[name]()
        grid = inst.grid_for_solver()
        candidate_plans = [[seg.do_nothing() for seg in inst.segments],
                           benchmarks.uniform_allocation(inst).plans,
                           benchmarks.cost_based_allocation(inst).plans,
                           [np.array([d[np.lexsort(d.T)[-1]] for d in seg.decisions]) for seg in inst.segments]]
        for _ in range(5):
            candidate_plans.append([np.array([d[rng.integers(len(d))] for d in seg.decisions])
                                    for seg in inst.segments])
        for plans in candidate_plans:
            for seg, plan in zip(inst.segments, plans):
                tr = ode.integrate(seg.model, seg.m0, plan, grid)
                worst = max(worst, float(np.max(np.abs(tr.states.sum(axis=1) - seg.m0.sum()))))
                runs += 1
    ok = worst <= 1e-7
    _report(capsys, 10, "compartment totals conserved", ok,
            f"{runs} full-horizon trajectories over DELPHI-V, Bass and 2-SAIR fixtures, max drift {worst:.1e}")
