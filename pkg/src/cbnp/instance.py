"""Problem instances: segments, finite decision sets, coupling rows and auxiliary variables.

Every problem is held in minimization form. Savings objectives subtract the
do-nothing cost of each segment, so a plan's cost is ``raw - baseline`` and
the do-nothing plan costs zero.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import ode
from .models import DynamicalModel

TOL = 1e-9


class InstanceError(ValueError):
    """Raised on malformed instances; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InfeasibleDecisionError(ValueError):
    pass


@dataclass
class Segment:
    name: str
    model: DynamicalModel
    m0: np.ndarray
    decisions: list  # per epoch, array (D_s, d)
    baseline: float = 0.0

    def __post_init__(self):
        self.m0 = np.asarray(self.m0, dtype=float)
        self.decisions = [np.atleast_2d(np.asarray(d, dtype=float)) for d in self.decisions]

    @property
    def n_epochs(self) -> int:
        return len(self.decisions)

    def do_nothing(self) -> np.ndarray:
        """Lexicographically smallest decision in every epoch."""
        out = []
        for dec in self.decisions:
            order = np.lexsort(dec.T[::-1])
            out.append(dec[order[0]])
        return np.array(out)

    def decision_index(self, s: int, x) -> int:
        hits = np.where(np.all(np.abs(self.decisions[s] - np.asarray(x, dtype=float)) <= TOL, axis=1))[0]
        if hits.size == 0:
            raise InfeasibleDecisionError(f"decision {list(np.atleast_1d(x))} not in feasible set of {self.name}, epoch {s}")
        return int(hits[0])


@dataclass
class CouplingRow:
    """sum_{i,s} u_{is}^T x_{is} + sum_l v_l y_l  (sense)  rhs."""

    name: str
    sense: str
    rhs: float
    plan_terms: dict = field(default_factory=dict)  # (segment, epoch) -> coefficient vector
    aux_terms: dict = field(default_factory=dict)  # aux index -> coefficient

    def __post_init__(self):
        if self.sense not in (">=", "<=", "="):
            raise ValueError(f"row {self.name}: unknown sense {self.sense!r}")
        self.plan_terms = {tuple(k): np.atleast_1d(np.asarray(v, dtype=float)) for k, v in self.plan_terms.items()}
        self.aux_terms = {int(k): float(v) for k, v in self.aux_terms.items()}

    @property
    def sign(self) -> float:
        """Multiplier mapping the row onto its canonical >= / = form."""
        return -1.0 if self.sense == "<=" else 1.0

    def plan_activity(self, i: int, plan: np.ndarray) -> float:
        return float(sum(coef @ plan[s] for (seg, s), coef in self.plan_terms.items() if seg == i))


@dataclass
class AuxVar:
    name: str
    cost: float = 0.0
    lb: float = 0.0
    ub: float = np.inf
    integer: bool = False


@dataclass
class SolverConfig:
    eps: float = 0.0
    clustering: str = "none"  # none | linf | kmeans
    kmeans_k: int | None = None
    gap: float = 1e-3
    time_limit: float = 600.0
    substeps: int = ode.DEFAULT_SUBSTEPS
    seed: int = 0
    branching: str = "tri"  # tri | bi
    node_selection: str = "best"  # best | depth
    max_colgen_iters: int = 500
    enum_cap: int = 10_000_000
    heuristic: bool = True
    heuristic_node_cap: int = 10_000
    max_nodes: int = 100_000
    exact_finish: bool = False

    def validate(self):
        if self.eps < 0:
            raise InstanceError("config.eps", "clustering tolerance must be non-negative")
        if self.clustering not in ("none", "linf", "kmeans"):
            raise InstanceError("config.clustering", f"unknown clustering mode {self.clustering!r}")
        if self.branching not in ("tri", "bi"):
            raise InstanceError("config.branching", "must be 'tri' or 'bi'")
        if self.node_selection not in ("best", "depth"):
            raise InstanceError("config.node_selection", "must be 'best' or 'depth'")
        if self.gap < 0:
            raise InstanceError("config.gap", "gap tolerance must be non-negative")
        if self.substeps < 1:
            raise InstanceError("config.substeps", "must be a positive integer")


@dataclass
class Instance:
    kind: str
    grid: ode.EpochGrid
    segments: list
    rows: list = field(default_factory=list)
    aux: list = field(default_factory=list)
    objective: str = "min"  # min | savings
    config: SolverConfig = field(default_factory=SolverConfig)
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.segments)

    @property
    def n_epochs(self) -> int:
        return self.grid.n_epochs

    def validate(self) -> "Instance":
        self.config.validate()
        S = self.grid.n_epochs
        for i, seg in enumerate(self.segments):
            p = f"segments[{i}]"
            if seg.m0.shape != (seg.model.dim,):
                raise InstanceError(f"{p}.initial_state", f"expected {seg.model.dim} entries, got {seg.m0.shape[0]}")
            if not np.all(np.isfinite(seg.m0)):
                raise InstanceError(f"{p}.initial_state", "entries must be finite")
            if len(seg.decisions) != S:
                raise InstanceError(f"{p}.decisions", f"expected {S} epochs, got {len(seg.decisions)}")
            for s, dec in enumerate(seg.decisions):
                if dec.size == 0 or dec.shape[0] == 0:
                    raise InstanceError(f"{p}.decisions[{s}]", "decision set is empty")
                if dec.shape[1] != seg.model.control_dim:
                    raise InstanceError(f"{p}.decisions[{s}]", f"decisions must have {seg.model.control_dim} components")
        for r, row in enumerate(self.rows):
            for (i, s), coef in row.plan_terms.items():
                if not (0 <= i < self.n and 0 <= s < S):
                    raise InstanceError(f"rows[{r}].plan_terms", f"reference ({i}, {s}) out of range")
                if coef.shape != (self.segments[i].model.control_dim,):
                    raise InstanceError(f"rows[{r}].plan_terms", "coefficient dimension mismatch")
            for l in row.aux_terms:
                if not 0 <= l < len(self.aux):
                    raise InstanceError(f"rows[{r}].aux_terms", f"aux index {l} out of range")
        if self.objective not in ("min", "savings"):
            raise InstanceError("objective", "must be 'min' or 'savings'")
        return self

    def with_config(self, **changes) -> "Instance":
        return replace(self, config=replace(self.config, **changes))

    def grid_for_solver(self) -> ode.EpochGrid:
        return ode.EpochGrid(self.grid.timestamps, self.config.substeps)

    def canonical_plan_coefs(self, i: int) -> list:
        """Per epoch, the matrix (n_rows, d) of canonical row coefficients on segment ``i``'s decisions."""
        d = self.segments[i].model.control_dim
        mats = [np.zeros((len(self.rows), d)) for _ in range(self.n_epochs)]
        for r, row in enumerate(self.rows):
            for (seg, s), coef in row.plan_terms.items():
                if seg == i:
                    mats[s][r] += row.sign * coef
        return mats


def raw_plan_cost(segment: Segment, plan, grid: ode.EpochGrid) -> float:
    plan = np.asarray(plan, dtype=float).reshape(grid.n_epochs, -1)
    traj = ode.integrate(segment.model, segment.m0, plan, grid)
    terminal = float(segment.model.terminal_cost(traj.terminal_state[None, :])[0])
    gamma = sum(segment.model.decision_cost(plan[s], s) for s in range(grid.n_epochs))
    return traj.running_cost + terminal + gamma


def evaluate_plan(segment: Segment, plan, grid: ode.EpochGrid, check: bool = True) -> float:
    """Cost of a full-horizon decision sequence, net of the segment baseline."""
    plan = np.asarray(plan, dtype=float).reshape(grid.n_epochs, -1)
    if check:
        for s in range(grid.n_epochs):
            segment.decision_index(s, plan[s])
    return raw_plan_cost(segment, plan, grid) - segment.baseline


def set_baselines(instance: Instance) -> Instance:
    """Fill segment baselines: do-nothing raw cost for savings objectives, zero otherwise."""
    grid = instance.grid_for_solver()
    for seg in instance.segments:
        seg.baseline = raw_plan_cost(seg, seg.do_nothing(), grid) if instance.objective == "savings" else 0.0
    return instance


def lives_saved_objective(baseline_costs, solution_costs, baseline_grid=None, solution_grid=None) -> float:
    """Savings = baseline cost minus solution cost, summed over segments."""
    if baseline_grid is not None and solution_grid is not None and baseline_grid != solution_grid:
        raise InstanceError("grid", "baseline and solution were evaluated on different grids")
    return float(np.sum(baseline_costs) - np.sum(solution_costs))


def row_activities(instance: Instance, plans, aux_values=None) -> np.ndarray:
    acts = np.zeros(len(instance.rows))
    for r, row in enumerate(instance.rows):
        acts[r] = sum(row.plan_activity(i, plans[i]) for i in range(instance.n))
        if aux_values is not None:
            acts[r] += sum(c * aux_values[l] for l, c in row.aux_terms.items())
    return acts


def rows_satisfied(instance: Instance, acts, tol: float = 1e-7) -> bool:
    for row, a in zip(instance.rows, acts):
        if row.sense == ">=" and a < row.rhs - tol:
            return False
        if row.sense == "<=" and a > row.rhs + tol:
            return False
        if row.sense == "=" and abs(a - row.rhs) > tol:
            return False
    return True


def solve_aux(instance: Instance, plans, fixed: dict | None = None):
    """Cheapest auxiliary values making ``plans`` feasible, or ``None``.

    Solved as a small mixed-integer program over the auxiliary variables only.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp

    if not instance.aux:
        acts = row_activities(instance, plans)
        return (np.zeros(0), 0.0) if rows_satisfied(instance, acts) else None
    m, q = len(instance.rows), len(instance.aux)
    plan_acts = row_activities(instance, plans)
    A = np.zeros((m, q))
    for r, row in enumerate(instance.rows):
        for l, c in row.aux_terms.items():
            A[r, l] = c
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for r, row in enumerate(instance.rows):
        rest = row.rhs - plan_acts[r]
        if row.sense in (">=", "="):
            lo[r] = rest - 1e-9
        if row.sense in ("<=", "="):
            hi[r] = rest + 1e-9
    lb = np.array([a.lb for a in instance.aux], dtype=float)
    ub = np.array([a.ub for a in instance.aux], dtype=float)
    for l, v in (fixed or {}).items():
        lb[l] = ub[l] = v
    cost = np.array([a.cost for a in instance.aux], dtype=float)
    integrality = np.array([1 if a.integer else 0 for a in instance.aux])
    res = milp(cost, constraints=LinearConstraint(A, lo, hi), bounds=Bounds(lb, ub), integrality=integrality)
    if res.status != 0 or res.x is None:
        return None
    return res.x, float(cost @ res.x)


def check_solution(instance: Instance, plans, aux_values=None, tol: float = 1e-7) -> bool:
    """Validator: decisions lie in their feasible sets and all coupling rows hold."""
    for i, seg in enumerate(instance.segments):
        for s in range(instance.n_epochs):
            try:
                seg.decision_index(s, plans[i][s])
            except InfeasibleDecisionError:
                return False
    if aux_values is None and instance.aux:
        return solve_aux(instance, plans) is not None
    if aux_values is not None:
        for a, v in zip(instance.aux, aux_values):
            if v < a.lb - tol or v > a.ub + tol or (a.integer and abs(v - round(v)) > 1e-6):
                return False
    return rows_satisfied(instance, row_activities(instance, plans, aux_values), tol)


def solution_cost(instance: Instance, plans, aux_values=None) -> float:
    grid = instance.grid_for_solver()
    total = sum(evaluate_plan(seg, plans[i], grid) for i, seg in enumerate(instance.segments))
    if aux_values is not None:
        total += sum(a.cost * v for a, v in zip(instance.aux, aux_values))
    return float(total)


def all_plans(segment: Segment) -> list:
    return [np.array(p) for p in itertools.product(*[list(d) for d in segment.decisions])]


def brute_force(instance: Instance, max_joint: int = 100_000):
    """Exhaustive joint enumeration; the independent oracle for small instances.

    Every plan is simulated on its own with ``ode.integrate``; joint plans are
    checked row by row. Returns ``(objective, plans, aux_values)`` or ``None``.
    """
    grid = instance.grid_for_solver()
    per_seg = [all_plans(seg) for seg in instance.segments]
    joint = int(np.prod([len(p) for p in per_seg], dtype=float))
    if joint > max_joint:
        raise ValueError(f"{joint} joint decision sequences exceeds the brute-force cap {max_joint}")
    costs = [np.array([evaluate_plan(seg, p, grid, check=False) for p in plans])
             for seg, plans in zip(instance.segments, per_seg)]
    acts = []
    for i, plans in enumerate(per_seg):
        acts.append(np.array([[row.plan_activity(i, p) for row in instance.rows] for p in plans]).reshape(len(plans), -1))
    best = None
    for combo in itertools.product(*[range(len(p)) for p in per_seg]):
        total = sum(costs[i][k] for i, k in enumerate(combo))
        if best is not None and total >= best[0] + 1e-12 and not instance.aux:
            continue
        chosen = [per_seg[i][k] for i, k in enumerate(combo)]
        if instance.aux:
            res = solve_aux(instance, chosen)
            if res is None:
                continue
            total += res[1]
            aux_vals = res[0]
        else:
            a = sum(acts[i][k] for i, k in enumerate(combo)) if instance.rows else np.zeros(0)
            if not rows_satisfied(instance, a):
                continue
            aux_vals = np.zeros(0)
        if best is None or total < best[0]:
            best = (float(total), chosen, aux_vals)
    return best
