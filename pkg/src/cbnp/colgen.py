"""Column generation over the set-partitioning master problem.

The master has one column per (segment, plan), the auxiliary variables of the
instance, and artificial columns on every row so that the restricted master is
always feasible. Rows are the coupling rows (canonical orientation) followed
by one convexity row per segment.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lp, pricing
from .instance import Instance, evaluate_plan

ARTIFICIAL_TOL = 1e-7
COMPONENT_TOL = 1e-6


@dataclass(frozen=True)
class Restriction:
    """A branching restriction.

    ``kind == "y"``: bound on auxiliary variable ``index`` (``op`` is ``le`` or ``ge``).
    ``kind == "x"``: filter on component ``comp`` of segment ``index``'s decision at
    ``epoch`` (``op`` in ``le``, ``ge``, ``lt``, ``eq``, ``gt``).
    """

    kind: str
    index: int
    op: str
    value: float
    epoch: int = -1
    comp: int = -1

    def admits(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        t = COMPONENT_TOL
        return {
            "le": v <= self.value + t,
            "ge": v >= self.value - t,
            "lt": v < self.value - t,
            "eq": np.abs(v - self.value) <= t,
            "gt": v > self.value + t,
        }[self.op]

    def describe(self) -> str:
        sym = {"le": "<=", "ge": ">=", "lt": "<", "eq": "=", "gt": ">"}[self.op]
        if self.kind == "y":
            return f"y[{self.index}] {sym} {self.value:g}"
        return f"x[{self.index},{self.epoch},{self.comp}] {sym} {self.value:g}"


def allowed_sets(instance: Instance, restrictions) -> list:
    """Per segment and epoch, the decision indices surviving the x-restrictions."""
    out = []
    for i, seg in enumerate(instance.segments):
        per = []
        for s, dec in enumerate(seg.decisions):
            mask = np.ones(len(dec), dtype=bool)
            for r in restrictions:
                if r.kind == "x" and r.index == i and r.epoch == s:
                    mask &= r.admits(dec[:, r.comp])
            per.append(np.nonzero(mask)[0])
        out.append(per)
    return out


def aux_bounds(instance: Instance, restrictions) -> list:
    bounds = [[a.lb, a.ub] for a in instance.aux]
    for r in restrictions:
        if r.kind == "y":
            if r.op == "le":
                bounds[r.index][1] = min(bounds[r.index][1], r.value)
            else:
                bounds[r.index][0] = max(bounds[r.index][0], r.value)
    return [tuple(b) for b in bounds]


@dataclass
class Plan:
    segment: int
    indices: np.ndarray
    decisions: np.ndarray
    cost: float
    origin: str = "initial"

    @property
    def key(self) -> tuple:
        return (self.segment, tuple(int(v) for v in self.indices))


class ColumnPool:
    """Global plan pool shared by every node of the tree."""

    def __init__(self):
        self.plans: list[Plan] = []
        self._index: dict = {}

    def __len__(self):
        return len(self.plans)

    def add(self, plan: Plan) -> tuple[int, bool]:
        pos = self._index.get(plan.key)
        if pos is not None:
            return pos, False
        self.plans.append(plan)
        self._index[plan.key] = len(self.plans) - 1
        return len(self.plans) - 1, True

    def find(self, segment: int, indices) -> int | None:
        return self._index.get((segment, tuple(int(v) for v in indices)))

    def admissible(self, allowed) -> list:
        out = []
        for k, p in enumerate(self.plans):
            a = allowed[p.segment]
            if all(np.any(a[s] == p.indices[s]) for s in range(len(a))):
                out.append(k)
        return out


def make_plan(instance: Instance, i: int, indices, origin: str) -> Plan:
    seg = instance.segments[i]
    indices = np.asarray(indices, dtype=int)
    dec = np.array([seg.decisions[s][indices[s]] for s in range(len(indices))])
    return Plan(i, indices, dec, evaluate_plan(seg, dec, instance.grid_for_solver(), check=False), origin)


def plan_from_decisions(instance: Instance, i: int, decisions, origin: str = "initial") -> Plan:
    seg = instance.segments[i]
    idx = [seg.decision_index(s, decisions[s]) for s in range(instance.n_epochs)]
    return make_plan(instance, i, idx, origin)


def seed_columns(instance: Instance, pool: ColumnPool | None = None) -> ColumnPool:
    """Do-nothing plan per segment, plus the uniform benchmark plan when it is feasible."""
    from . import benchmarks

    pool = ColumnPool() if pool is None else pool
    for i, seg in enumerate(instance.segments):
        pool.add(plan_from_decisions(instance, i, seg.do_nothing(), "initial"))
    plans = benchmarks.uniform_plans(instance)
    if plans is not None:
        from .instance import check_solution

        if check_solution(instance, plans):
            for i, p in enumerate(plans):
                pool.add(plan_from_decisions(instance, i, p, "initial"))
    return pool


@dataclass
class Duals:
    lam: np.ndarray  # coupling rows, canonical orientation
    mu: np.ndarray  # convexity rows


@dataclass
class ColgenResult:
    status: str  # optimal | infeasible | truncated
    objective: float
    columns: list  # pool indices present in the final RMP
    z: np.ndarray
    y: np.ndarray
    x_hat: list  # per segment (S, d)
    iterations: int
    duals: Duals | None = None
    log: list = field(default_factory=list)  # (iteration, objective, min reduced cost, columns added)
    proven: bool = True
    artificial_mass: float = 0.0

    def plan_weights(self, pool: ColumnPool, i: int) -> list:
        return [(pool.plans[k], v) for k, v in zip(self.columns, self.z) if pool.plans[k].segment == i]


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CBNP_THREADS", "1")))
    except ValueError:
        return 1


class ColumnGeneration:
    """Solves node relaxations against a shared pool and a per-node space cache."""

    def __init__(self, instance: Instance, pool: ColumnPool | None = None, log_sink=None):
        self.instance = instance
        self.grid = instance.grid_for_solver()
        self.pool = seed_columns(instance, pool)
        self.coefs = [instance.canonical_plan_coefs(i) for i in range(instance.n)]
        self._spaces: dict = {}
        self.log_sink = log_sink
        seed_costs = [abs(p.cost) for p in self.pool.plans] or [0.0]
        self.penalty = 1e6 * (max(seed_costs) + 1.0)
        self.pricing_calls = 0

    # -- spaces -------------------------------------------------------------
    def space(self, i: int, allowed) -> pricing.StateSpace:
        key = (i, pricing.space_fingerprint(allowed))
        sp = self._spaces.get(key)
        if sp is None:
            sp = pricing.build_space(self.instance.segments[i], self.grid, self.instance.config, allowed)
            self._spaces[key] = sp
        return sp

    # -- master -------------------------------------------------------------
    def plan_activity(self, plan: Plan) -> np.ndarray:
        mats = self.coefs[plan.segment]
        return sum(mats[s] @ plan.decisions[s] for s in range(len(mats))) if mats else np.zeros(0)

    def build_master(self, columns, ybounds, artificials: bool = True, integer: bool = False):
        inst = self.instance
        p = lp.LpProblem()
        m = len(inst.rows)
        for row in inst.rows:
            p.add_row("=" if row.sense == "=" else ">=", row.sign * row.rhs, row.name)
        for i in range(inst.n):
            p.add_row("=", 1.0, f"convexity_{i}")
        for k in columns:
            plan = self.pool.plans[k]
            act = self.plan_activity(plan)
            coefs = {r: float(v) for r, v in enumerate(act) if v != 0.0}
            coefs[m + plan.segment] = 1.0
            p.add_column(lp.Column(plan.cost, coefs, 0.0, 1.0 if integer else np.inf, integer, ("plan", k)))
        for l, a in enumerate(inst.aux):
            coefs = {}
            for r, row in enumerate(inst.rows):
                if l in row.aux_terms:
                    coefs[r] = row.sign * row.aux_terms[l]
            lo, hi = ybounds[l]
            p.add_column(lp.Column(a.cost, coefs, lo, hi, integer and a.integer, ("aux", l)))
        if artificials:
            for r in range(p.n_rows):
                p.add_column(lp.Column(self.penalty, {r: 1.0}, tag=("art", r)))
                if p.senses[r] == "=":
                    p.add_column(lp.Column(self.penalty, {r: -1.0}, tag=("art", r)))
        return p

    def adjustments(self, i: int, allowed, lam: np.ndarray) -> list:
        seg = self.instance.segments[i]
        out = []
        for s, idx in enumerate(allowed):
            w = self.coefs[i][s].T @ lam if len(lam) else np.zeros(seg.model.control_dim)
            out.append(-(seg.decisions[s][idx] @ w))
        return out

    def price(self, i: int, allowed, duals: Duals) -> pricing.PricingResult:
        self.pricing_calls += 1
        sp = self.space(i, allowed[i])
        return pricing.backward_induct(sp, self.instance.segments[i], self.adjustments(i, allowed[i], duals.lam),
                                       duals.mu[i])

    def true_reduced_cost(self, plan: Plan, duals: Duals) -> float:
        act = self.plan_activity(plan)
        return plan.cost - float(act @ duals.lam) - float(duals.mu[plan.segment])

    # -- main loop ----------------------------------------------------------
    def solve(self, restrictions=(), node_id: int = 0, max_iters: int | None = None) -> ColgenResult:
        inst = self.instance
        max_iters = inst.config.max_colgen_iters if max_iters is None else max_iters
        allowed = allowed_sets(inst, restrictions)
        ybounds = aux_bounds(inst, restrictions)
        if any(len(a) == 0 for per in allowed for a in per) or any(lo > hi + 1e-9 for lo, hi in ybounds):
            return ColgenResult("infeasible", np.inf, [], np.zeros(0), np.zeros(0), [], 0)
        columns = self.pool.admissible(allowed)
        m = len(inst.rows)
        log = []
        status = "truncated"
        workers = _workers()
        it = 0
        sol = None
        while it < max_iters:
            it += 1
            master = self.build_master(columns, ybounds)
            sol = lp.solve_lp(master)
            if not sol.optimal:
                return ColgenResult("infeasible", np.inf, columns, np.zeros(0), np.zeros(0), [], it, log=log)
            duals = Duals(sol.duals[:m], sol.duals[m:])
            if workers > 1:
                with ThreadPoolExecutor(workers) as ex:
                    results = list(ex.map(lambda i: self.price(i, allowed, duals), range(inst.n)))
            else:
                results = [self.price(i, allowed, duals) for i in range(inst.n)]
            added, min_rc = 0, np.inf
            for i, res in enumerate(results):
                min_rc = min(min_rc, res.reduced_cost)
                if res.reduced_cost >= pricing.REDUCED_COST_TOL:
                    continue
                if self.pool.find(i, res.indices) is not None:
                    continue
                plan = make_plan(inst, i, res.indices, f"node-{node_id}")
                if self.true_reduced_cost(plan, duals) < pricing.REDUCED_COST_TOL:
                    k, _ = self.pool.add(plan)
                    columns.append(k)
                    added += 1
            log.append((it, sol.objective, min_rc, added))
            if self.log_sink is not None:
                self.log_sink(f"{node_id},{it},{sol.objective:.12g},{min_rc:.6g},{added}")
            if added == 0:
                status = "optimal"
                break
        if status == "truncated":
            master = self.build_master(columns, ybounds)
            sol = lp.solve_lp(master)
            duals = Duals(sol.duals[:m], sol.duals[m:])
        nplan = len(columns)
        x = sol.x
        z = x[:nplan]
        y = x[nplan:nplan + len(inst.aux)]
        art = float(np.sum(x[nplan + len(inst.aux):]))
        if art > ARTIFICIAL_TOL:
            return ColgenResult("infeasible", np.inf, columns, z, y, [], it, duals, log, artificial_mass=art)
        x_hat = []
        for i, seg in enumerate(inst.segments):
            acc = np.zeros((inst.n_epochs, seg.model.control_dim))
            for k, v in zip(columns, z):
                if self.pool.plans[k].segment == i:
                    acc += v * self.pool.plans[k].decisions
            x_hat.append(acc)
        proven = status == "optimal" and inst.config.clustering == "none"
        return ColgenResult(status, float(sol.objective), columns, z, y, x_hat, it, duals, log, proven, art)

    # -- upper bounding ------------------------------------------------------
    def integer_heuristic(self, result: ColgenResult, restrictions=(), cutoff: float = np.inf):
        """Integer-restricted master over the node's current columns, artificials removed.

        With integer auxiliary variables, first try them fixed at their rounded
        relaxation values, then fall back to the full restricted problem.
        Returns ``(objective, plan pool indices per segment, aux values)`` or ``None``.
        """
        inst = self.instance
        ybounds = aux_bounds(inst, restrictions)
        master = self.build_master(result.columns, ybounds, artificials=False, integer=True)
        attempts = []
        int_aux = [l for l, a in enumerate(inst.aux) if a.integer]
        if int_aux and len(result.y):
            fixed = {}
            for l in int_aux:
                v = float(np.clip(np.round(result.y[l]), *ybounds[l]))
                fixed[len(result.columns) + l] = (v, v)
            attempts.append(fixed)
        attempts.append({})
        for fix in attempts:
            res = lp.solve_integer_restricted(master, node_cap=inst.config.heuristic_node_cap,
                                              bounds_override=fix, cutoff=cutoff)
            if res.found:
                z = res.x[:len(result.columns)]
                chosen = {}
                for k, v in zip(result.columns, z):
                    if v > 0.5:
                        chosen[self.pool.plans[k].segment] = k
                if len(chosen) == inst.n:
                    return res.objective, [chosen[i] for i in range(inst.n)], res.x[len(result.columns):]
        return None
