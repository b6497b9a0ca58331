"""Branch-and-price tree: node bookkeeping, branching rules and the search loop.

Children are evaluated as soon as they are created and enter the open list
keyed by their own relaxation bound. The search itself is independent of how
nodes are evaluated: ``search`` takes an evaluator callback, and
``solve_tree`` plugs in column generation.
"""
from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .colgen import COMPONENT_TOL, ColgenResult, ColumnGeneration, Restriction, allowed_sets
from .instance import Instance

INT_TOL = 1e-6


@dataclass
class BnpNode:
    id: int
    parent: int | None
    restrictions: tuple = ()
    bound: float = -np.inf
    depth: int = 0
    status: str = "open"  # open | branched | pruned-bound | pruned-infeasible | integral | fractional
    action: str = ""
    payload: object = None


@dataclass
class Evaluation:
    """Outcome of evaluating one node.

    ``kind``: infeasible | integral | branch | fractional (no valid branch).
    ``children`` lists restriction tuples to append for each child.
    """

    kind: str
    bound: float = np.inf
    children: list = field(default_factory=list)
    incumbent: object = None
    incumbent_value: float = np.inf
    action: str = ""
    payload: object = None


def discrete_floor(values, a: float) -> float | None:
    """Largest attainable component value not above ``a`` (None when none is)."""
    v = np.asarray(values, dtype=float)
    below = v[v <= a + COMPONENT_TOL]
    return float(below.max()) if below.size else None


def discrete_ceil(values, a: float) -> float | None:
    v = np.asarray(values, dtype=float)
    above = v[v >= a - COMPONENT_TOL]
    return float(above.min()) if above.size else None


def bipartite_candidates(decision_sets, x_hat) -> list:
    """Scored bi-partite candidates ``(score, i, s, k, x, floor, ceil)`` over components
    whose value lies strictly between attainable values."""
    out = []
    for i, per in enumerate(decision_sets):
        for s, dec in enumerate(per):
            for k in range(dec.shape[1]):
                a = float(x_hat[i][s][k])
                lo, hi = discrete_floor(dec[:, k], a), discrete_ceil(dec[:, k], a)
                if lo is None or hi is None or hi - lo <= COMPONENT_TOL:
                    continue
                if a - lo > COMPONENT_TOL and hi - a > COMPONENT_TOL:
                    out.append((min(a - lo, hi - a), i, s, k, a, lo, hi))
    return out


def select_bipartite(decision_sets, x_hat):
    cands = bipartite_candidates(decision_sets, x_hat)
    if not cands:
        return None
    return max(cands, key=lambda c: (c[0], -c[1], -c[2], -c[3]))


def tripartite_score(weights, i: int, s: int, k: int, x: float) -> float:
    """sum_p z_p |alpha^k_p - x| over the plans of segment ``i`` at epoch ``s``."""
    return float(sum(z * abs(a[s][k] - x) for a, z in weights))


def select_tripartite(weights_by_segment, x_hat, only=None):
    """Candidate ``(score, i, s, k, x)`` with the largest weighted spread, or None."""
    best = None
    for i, weights in enumerate(weights_by_segment):
        if only is not None and i != only[0]:
            continue
        S, d = x_hat[i].shape
        for s in range(S):
            if only is not None and s != only[1]:
                continue
            for k in range(d):
                x = float(x_hat[i][s][k])
                score = tripartite_score(weights, i, s, k, x)
                if score > INT_TOL and (best is None or score > best[0] + 1e-12):
                    best = (score, i, s, k, x)
    return best


def branch_y(l: int, y: float) -> list:
    return [(Restriction("y", l, "le", float(np.floor(y))),), (Restriction("y", l, "ge", float(np.ceil(y))),)]


def branch_bipartite(i: int, s: int, k: int, lo: float, hi: float) -> list:
    return [(Restriction("x", i, "le", lo, s, k),), (Restriction("x", i, "ge", hi, s, k),)]


def branch_tripartite(i: int, s: int, k: int, x: float) -> list:
    return [(Restriction("x", i, op, x, s, k),) for op in ("lt", "eq", "gt")]


def in_set(dec: np.ndarray, x) -> bool:
    return bool(np.any(np.all(np.abs(dec - np.asarray(x)) <= COMPONENT_TOL, axis=1)))


@dataclass
class TreeResult:
    status: str  # optimal | gap | infeasible | time_limit | node_limit | fractional
    upper_bound: float
    lower_bound: float
    incumbent: object
    nodes: list
    trace: list
    elapsed: float
    fractional_leaves: int = 0

    @property
    def gap(self) -> float:
        if not np.isfinite(self.upper_bound):
            return np.inf
        return max(0.0, (self.upper_bound - self.lower_bound) / max(abs(self.upper_bound), 1e-9))

    def trace_csv(self) -> str:
        lines = ["id,parent,action,bound,ub"]
        for row in self.trace:
            lines.append(",".join("" if v is None else (f"{v:.12g}" if isinstance(v, float) else str(v)) for v in row))
        return "\n".join(lines) + "\n"


def search(evaluate, gap: float = 1e-3, node_selection: str = "best", time_limit: float = np.inf,
           max_nodes: int = 100_000) -> TreeResult:
    """Generic tree search over an ``evaluate(node, ub) -> Evaluation`` callback."""
    start = time.monotonic()
    counter = itertools.count()
    nodes: list[BnpNode] = []
    trace = []
    ub, incumbent = np.inf, None
    open_heap: list = []
    fractional_bounds = []
    tolerance_bounds = []

    def prunable(bound):
        return bound >= ub - gap * max(abs(ub), 1e-9) - 1e-9 if np.isfinite(ub) else False

    def record(node):
        trace.append((node.id, node.parent, node.action or node.status, float(node.bound), float(ub)))

    def process(node: BnpNode):
        nonlocal ub, incumbent
        ev = evaluate(node, ub)
        node.bound = ev.bound
        node.payload = ev.payload
        node.action = ev.action
        if ev.incumbent is not None and ev.incumbent_value < ub - 1e-12:
            ub, incumbent = ev.incumbent_value, ev.incumbent
        if ev.kind == "infeasible":
            node.status = "pruned-infeasible"
        elif ev.kind == "integral":
            node.status = "integral"
        elif prunable(ev.bound):
            node.status = "pruned-bound"
            if ev.bound < ub:
                tolerance_bounds.append(ev.bound)
        elif ev.kind == "fractional":
            node.status = "fractional"
            fractional_bounds.append(ev.bound)
        else:
            node.status = "open"
            node.payload = (ev.children, ev.payload)
            key = ev.bound if node_selection == "best" else -node.depth
            heapq.heappush(open_heap, (key, next(counter), node))
        if not node.action:
            node.action = node.status
        record(node)

    root = BnpNode(0, None)
    nodes.append(root)
    process(root)
    status = None
    while open_heap:
        if time.monotonic() - start > time_limit:
            status = "time_limit"
            break
        if len(nodes) >= max_nodes:
            status = "node_limit"
            break
        _, _, node = heapq.heappop(open_heap)
        if prunable(node.bound):
            node.status = "pruned-bound"
            if node.bound < ub:
                tolerance_bounds.append(node.bound)
            trace.append((node.id, node.parent, "pruned-bound", float(node.bound), float(ub)))
            continue
        children, _ = node.payload
        node.status = "branched"
        for extra in children:
            child = BnpNode(len(nodes), node.id, node.restrictions + tuple(extra), node.bound, node.depth + 1)
            nodes.append(child)
            process(child)
    open_bounds = [n.bound for _, _, n in open_heap]
    lb_candidates = open_bounds + fractional_bounds + tolerance_bounds
    lb = min(lb_candidates + [ub]) if lb_candidates or np.isfinite(ub) else np.inf
    if root.status == "pruned-infeasible" or (not np.isfinite(ub) and not lb_candidates):
        status = status or "infeasible"
        lb = np.inf
    if status is None:
        if fractional_bounds and (not np.isfinite(ub) or min(fractional_bounds) < ub - 1e-9):
            status = "fractional"
        else:
            status = "optimal" if lb >= ub - 1e-9 else "gap"
    return TreeResult(status, ub, lb, incumbent, nodes, trace, time.monotonic() - start, len(fractional_bounds))


@dataclass
class Incumbent:
    plans: list  # per segment (S, d) decisions
    plan_ids: list
    aux: np.ndarray
    objective: float


class NodeEvaluator:
    """Column generation plus branching decisions for real instances."""

    def __init__(self, instance: Instance, cg: ColumnGeneration | None = None):
        self.instance = instance
        self.cg = cg or ColumnGeneration(instance)
        self.results: dict = {}

    def _incumbent_from(self, res: ColgenResult, ids=None, aux=None) -> Incumbent:
        pool = self.cg.pool
        if ids is None:
            ids = [None] * self.instance.n
            for k, v in zip(res.columns, res.z):
                if v > 0.5:
                    ids[pool.plans[k].segment] = k
        plans = [pool.plans[k].decisions for k in ids]
        aux = res.y if aux is None else aux
        aux = np.array([round(v) if a.integer else v for v, a in zip(aux, self.instance.aux)])
        obj = float(sum(pool.plans[k].cost for k in ids) + sum(a.cost * v for a, v in zip(self.instance.aux, aux)))
        return Incumbent(plans, list(ids), aux, obj)

    def __call__(self, node: BnpNode, ub: float) -> Evaluation:
        inst = self.instance
        res = self.cg.solve(node.restrictions, node.id)
        self.results[node.id] = res
        if res.status == "infeasible":
            return Evaluation("infeasible", np.inf, action="infeasible")
        bound = res.objective
        ev_inc, ev_val = None, np.inf
        if inst.config.heuristic and bound < ub:
            h = self.cg.integer_heuristic(res, node.restrictions, cutoff=ub)
            if h is not None:
                inc = self._incumbent_from(res, h[1], h[2][:len(inst.aux)])
                ev_inc, ev_val = inc, inc.objective
        # fractional auxiliary integers
        fr = [(min(v - np.floor(v), np.ceil(v) - v), l, v) for l, (v, a) in enumerate(zip(res.y, inst.aux)) if a.integer]
        fr = [f for f in fr if f[0] > INT_TOL]
        if fr:
            _, l, v = max(fr, key=lambda f: (f[0], -f[1]))
            return Evaluation("branch", bound, branch_y(l, v), ev_inc, ev_val, f"branch-y[{l}]")
        allowed = allowed_sets(inst, node.restrictions)
        dsets = [[seg.decisions[s][allowed[i][s]] for s in range(inst.n_epochs)] for i, seg in enumerate(inst.segments)]
        outside = [(i, s) for i in range(inst.n) for s in range(inst.n_epochs) if not in_set(dsets[i][s], res.x_hat[i][s])]
        weights = [[(self.cg.pool.plans[k].decisions, v) for k, v in zip(res.columns, res.z)
                    if self.cg.pool.plans[k].segment == i and v > INT_TOL] for i in range(inst.n)]
        if outside:
            cand = select_bipartite(dsets, res.x_hat)
            if cand is not None:
                _, i, s, k, _, lo, hi = cand
                return Evaluation("branch", bound, branch_bipartite(i, s, k, lo, hi), ev_inc, ev_val,
                                  f"bi x[{i},{s},{k}]")
            # every component value is attainable but the vector is not: split three ways
            if inst.config.branching == "bi":
                return Evaluation("fractional", bound, incumbent=ev_inc, incumbent_value=ev_val, action="fractional")
            i, s = outside[0]
            cand = select_tripartite(weights, res.x_hat, only=(i, s))
            _, i, s, k, x = cand
            return Evaluation("branch", bound, branch_tripartite(i, s, k, x), ev_inc, ev_val, f"tri x[{i},{s},{k}]")
        cand = select_tripartite(weights, res.x_hat)
        if cand is None:
            inc = self._incumbent_from(res)
            if ev_inc is None or inc.objective < ev_val:
                ev_inc, ev_val = inc, inc.objective
            return Evaluation("integral", bound, incumbent=ev_inc, incumbent_value=ev_val, action="integral")
        if inst.config.branching == "bi":
            return Evaluation("fractional", bound, incumbent=ev_inc, incumbent_value=ev_val, action="fractional")
        _, i, s, k, x = cand
        return Evaluation("branch", bound, branch_tripartite(i, s, k, x), ev_inc, ev_val, f"tri x[{i},{s},{k}]")


@dataclass
class Solution:
    instance: Instance
    tree: TreeResult
    incumbent: Incumbent | None
    pool_size: int
    colgen_iterations: int
    root_bound: float
    root_log: list
    evaluator: NodeEvaluator | None = None

    @property
    def status(self) -> str:
        return self.tree.status

    @property
    def objective(self) -> float:
        return self.tree.upper_bound

    @property
    def bound(self) -> float:
        return self.tree.lower_bound

    @property
    def gap(self) -> float:
        return self.tree.gap

    @property
    def proven(self) -> bool:
        return self.instance.config.clustering == "none"


def solve_tree(instance: Instance, log_sink=None) -> Solution:
    """Branch-and-price on a validated instance (min form)."""
    cfg = instance.config
    evaluator = NodeEvaluator(instance, ColumnGeneration(instance, log_sink=log_sink))
    tree = search(evaluator, cfg.gap, cfg.node_selection, cfg.time_limit, cfg.max_nodes)
    root = evaluator.results.get(0)
    iters = sum(r.iterations for r in evaluator.results.values())
    return Solution(instance, tree, tree.incumbent, len(evaluator.cg.pool), iters,
                    root.objective if root is not None else np.inf, root.log if root is not None else [], evaluator)
