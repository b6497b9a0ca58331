"""Practical allocation baselines and the parameter-perturbation protocol.

Proportional splits use largest-remainder rounding in resource units (pallets,
vehicles, share increments) with index-order tie-breaks, so budgets are met
exactly before snapping to each segment's decision grid.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ode
from .instance import Instance, check_solution, evaluate_plan, raw_plan_cost, solve_aux


@dataclass
class BenchmarkReport:
    method: str
    objective: float  # native sense: savings for savings objectives, cost otherwise
    seconds: float
    plans: list | None
    aux: np.ndarray | None = None
    feasible: bool = True
    samples: int = 1
    details: dict = field(default_factory=dict)

    def allocation_rows(self, instance: Instance) -> list:
        rows = []
        if self.plans is None:
            return rows
        for i, seg in enumerate(instance.segments):
            for s in range(instance.n_epochs):
                for k, name in enumerate(seg.model.control_names):
                    rows.append((seg.name, s, name, float(self.plans[i][s][k])))
        return rows


def largest_remainder(total: int, weights) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights``; leftovers go to the largest
    remainders, lowest index first."""
    w = np.asarray(weights, dtype=float)
    total = int(total)
    if w.sum() <= 0:
        w = np.ones_like(w)
    quota = total * w / w.sum()
    base = np.floor(quota + 1e-12).astype(int)
    rem = quota - base
    left = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda j: (-round(rem[j], 12), j))
    for j in order[:max(left, 0)]:
        base[j] += 1
    return base


def snap(decisions: np.ndarray, target) -> np.ndarray:
    """Nearest decision in l-infinity distance; ties go to the lexicographically lowest."""
    target = np.asarray(target, dtype=float)
    dist = np.max(np.abs(decisions - target), axis=1)
    best = np.nonzero(dist <= dist.min() + 1e-12)[0]
    cand = decisions[best]
    order = np.lexsort(cand.T[::-1])
    return cand[order[0]].copy()


def native_objective(instance: Instance, cost: float) -> float:
    return -cost if instance.objective == "savings" else cost


def _split_resources(instance: Instance, weights) -> list:
    """Plans giving each budgeted resource a proportional share per epoch."""
    meta = instance.meta
    S, n = instance.n_epochs, instance.n
    d = instance.segments[0].model.control_dim
    budgets = np.asarray(meta["budget"], dtype=float).reshape(-1, S)  # (resources, S)
    units = np.asarray(meta.get("unit", [1.0] * budgets.shape[0]), dtype=float).reshape(-1)
    targets = np.zeros((n, S, d))
    for r in range(budgets.shape[0]):
        for s in range(S):
            counts = largest_remainder(int(np.floor(budgets[r, s] / units[r] + 1e-9)), weights)
            targets[:, s, r] = counts * units[r]
    plans = []
    for i, seg in enumerate(instance.segments):
        plans.append(np.array([snap(seg.decisions[s], targets[i, s]) for s in range(S)]))
    return plans


def baseline_costs(instance: Instance) -> np.ndarray:
    grid = instance.grid_for_solver()
    return np.array([raw_plan_cost(seg, seg.do_nothing(), grid) for seg in instance.segments])


def _content_plans(instance: Instance, chosen_per_epoch, weights_per_epoch=None) -> list:
    K = int(instance.meta["sparsity"])
    L = float(instance.meta["increment"])
    S, n = instance.n_epochs, instance.n
    units = int(round(1.0 / L))
    plans = [np.zeros((S, 2)) for _ in range(n)]
    for s in range(S):
        chosen = list(chosen_per_epoch[s])[:K]
        w = np.ones(len(chosen)) if weights_per_epoch is None else np.asarray(weights_per_epoch[s], dtype=float)
        counts = largest_remainder(units, w)
        for j, c in zip(chosen, counts):
            if c > 0:
                plans[j][s] = (1.0, c * L)
    return [np.array([snap(instance.segments[i].decisions[s], plans[i][s]) for s in range(S)]) for i in range(n)]


def top_k_facilities(instance: Instance) -> np.ndarray:
    """Indicator of the K facilities covering the most people (lowest id on ties)."""
    P = np.asarray(instance.meta["coverage"], dtype=float)  # (n, F)
    K = int(instance.meta["K"])
    order = sorted(range(P.shape[1]), key=lambda j: (-P[:, j].sum(), j))
    y = np.zeros(P.shape[1])
    y[order[:K]] = 1.0
    return y


def _facility_fixed(y) -> dict:
    return {j: float(v) for j, v in enumerate(y)}


def repair_facility(instance: Instance, plans, y) -> tuple:
    """Lower allocations one pallet at a time until flows exist for the fixed facilities."""
    plans = [p.copy() for p in plans]
    L = float(instance.meta["pallet"])
    fixed = _facility_fixed(y)
    while True:
        res = solve_aux(instance, plans, fixed)
        if res is not None:
            return plans, res[0]
        # reduce the largest allocation, latest epoch and lowest segment first on ties
        best = None
        for i, p in enumerate(plans):
            for s in range(len(p)):
                if p[s][0] > 0 and (best is None or (p[s][0], s, -i) > best[0]):
                    best = ((p[s][0], s, -i), i, s)
        if best is None:
            return plans, None
        _, i, s = best
        plans[i][s] = snap(instance.segments[i].decisions[s], plans[i][s] - L)


def _report(instance: Instance, method: str, plans, t0: float, aux=None, **details) -> BenchmarkReport:
    if plans is None:
        return BenchmarkReport(method, np.nan, time.perf_counter() - t0, None, feasible=False, details=details)
    feasible = check_solution(instance, plans, aux if aux is not None and len(instance.aux) else None)
    grid = instance.grid_for_solver()
    cost = sum(evaluate_plan(seg, plans[i], grid) for i, seg in enumerate(instance.segments))
    if aux is not None:
        cost += sum(a.cost * v for a, v in zip(instance.aux, aux))
    return BenchmarkReport(method, native_objective(instance, cost), time.perf_counter() - t0, plans,
                           aux, feasible, details=details)


def uniform_plans(instance: Instance, rng: np.random.Generator | None = None):
    """Equal-share allocation, or ``None`` for problem kinds without a budget split."""
    kind = instance.kind
    if kind in ("vaccine", "congestion"):
        return _split_resources(instance, np.ones(instance.n))
    if kind == "content":
        K = int(instance.meta["sparsity"])
        if rng is None:
            chosen = [list(range(min(K, instance.n)))] * instance.n_epochs
        else:
            chosen = [sorted(rng.choice(instance.n, size=min(K, instance.n), replace=False))
                      for _ in range(instance.n_epochs)]
        return _content_plans(instance, chosen)
    if kind == "facility":
        y = top_k_facilities(instance)
        plans, _ = repair_facility(instance, _split_resources(instance, np.ones(instance.n)), y)
        return plans
    return None


def uniform_allocation(instance: Instance, samples: int = 100, seed: int | None = None) -> BenchmarkReport:
    t0 = time.perf_counter()
    if instance.kind == "content":
        seed = instance.config.seed if seed is None else seed
        vals, first = [], None
        for k in range(samples):
            plans = uniform_plans(instance, np.random.default_rng([int(seed), 7, k]))
            rep = _report(instance, "uniform", plans, t0)
            vals.append(rep.objective)
            first = first or rep
        first.objective = float(np.mean(vals))
        first.samples = samples
        first.seconds = time.perf_counter() - t0
        first.details["min"] = float(np.min(vals))
        first.details["max"] = float(np.max(vals))
        return first
    if instance.kind == "facility":
        y = top_k_facilities(instance)
        plans, flows = repair_facility(instance, _split_resources(instance, np.ones(instance.n)), y)
        return _report(instance, "uniform", plans, t0, _merge_y(instance, y, flows))
    return _report(instance, "uniform", uniform_plans(instance), t0)


def _merge_y(instance, y, aux):
    if aux is None:
        return None
    out = np.asarray(aux, dtype=float).copy()
    out[:len(y)] = y
    return out


def promotion_impact(instance: Instance) -> np.ndarray:
    """Per product, the saving from full promotion in every epoch."""
    grid = instance.grid_for_solver()
    out = []
    for seg in instance.segments:
        full = np.array([dec[np.lexsort(dec.T)[-1]] for dec in seg.decisions])
        out.append(raw_plan_cost(seg, seg.do_nothing(), grid) - raw_plan_cost(seg, full, grid))
    return np.array(out)


def cost_based_allocation(instance: Instance) -> BenchmarkReport:
    t0 = time.perf_counter()
    if instance.kind == "content":
        impact = promotion_impact(instance)
        K = int(instance.meta["sparsity"])
        order = sorted(range(instance.n), key=lambda j: (-impact[j], j))[:K]
        chosen = sorted(order)
        plans = _content_plans(instance, [chosen] * instance.n_epochs, [impact[chosen]] * instance.n_epochs)
        return _report(instance, "cost-based", plans, t0)
    weights = np.abs(baseline_costs(instance))
    if instance.kind == "facility":
        y = top_k_facilities(instance)
        plans, flows = repair_facility(instance, _split_resources(instance, weights), y)
        return _report(instance, "cost-based", plans, t0, _merge_y(instance, y, flows))
    if instance.kind not in ("vaccine", "congestion"):
        return _report(instance, "cost-based", None, t0)
    return _report(instance, "cost-based", _split_resources(instance, weights), t0)


def optimized(instance: Instance, method: str = "optimized") -> BenchmarkReport:
    from .tree import solve_tree

    t0 = time.perf_counter()
    sol = solve_tree(instance)
    if sol.incumbent is None:
        return _report(instance, method, None, t0)
    rep = _report(instance, method, sol.incumbent.plans, t0, sol.incumbent.aux if len(instance.aux) else None)
    rep.details.update(gap=sol.gap, status=sol.status)
    return rep


def fix_facilities(instance: Instance, y) -> Instance:
    aux = list(instance.aux)
    for j, v in enumerate(y):
        aux[j] = replace(aux[j], lb=float(v), ub=float(v))
    return replace(instance, aux=aux)


def top_k_reports(instance: Instance) -> tuple:
    """(top-K with uniform downstream allocation, top-K with optimized downstream allocation)."""
    y = top_k_facilities(instance)
    t0 = time.perf_counter()
    plans, flows = repair_facility(instance, _split_resources(instance, np.ones(instance.n)), y)
    uni = _report(instance, "topk-uniform", plans, t0, _merge_y(instance, y, flows))
    opt = optimized(fix_facilities(instance, y), "topk-optimized")
    return uni, opt


@dataclass
class PerturbationReport:
    magnitude: float
    samples: int
    values: np.ndarray
    failed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values.size else np.nan

    @property
    def min(self) -> float:
        return float(np.min(self.values)) if self.values.size else np.nan

    @property
    def max(self) -> float:
        return float(np.max(self.values)) if self.values.size else np.nan


def perturb_and_evaluate(instance: Instance, plans, magnitude: float = 0.2, samples: int = 20,
                         seed: int | None = None) -> PerturbationReport:
    """Re-simulate a fixed allocation under multiplicatively perturbed dynamics.

    Every sample draws a fresh model per segment; savings are measured against
    the do-nothing plan under the same perturbed model.
    """
    if not 0.0 <= magnitude < 1.0:
        raise ValueError("perturbation magnitude must lie in [0, 1)")
    seed = instance.config.seed if seed is None else seed
    grid = instance.grid_for_solver()
    vals, failed = [], 0
    for k in range(samples):
        rng = np.random.default_rng([int(seed), 11, k])
        total = 0.0
        try:
            for i, seg in enumerate(instance.segments):
                model = seg.model.perturbed(rng, magnitude) if magnitude > 0 else seg.model
                pert = replace(seg, model=model)
                cost = raw_plan_cost(pert, plans[i], grid)
                base = raw_plan_cost(pert, seg.do_nothing(), grid) if instance.objective == "savings" else 0.0
                total += cost - base
        except ode.DivergenceError:
            failed += 1
            continue
        vals.append(native_objective(instance, total))
    return PerturbationReport(magnitude, samples, np.array(vals), failed)


def reports_csv(reports) -> str:
    lines = ["method,time,objective"]
    for r in reports:
        lines.append(f"{r.method},{r.seconds:.4f},{r.objective:.10g}")
    return "\n".join(lines) + "\n"
