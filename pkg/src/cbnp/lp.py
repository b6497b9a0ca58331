"""Dense LP kernel for the restricted master problem.

Rows are kept in canonical ``>=`` or ``=`` form (``<=`` rows are negated on
entry). The LP itself is solved with HiGHS through ``scipy.optimize.linprog``;
duals are reported in the canonical orientation, so duals of ``>=`` rows are
non-negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-8
OPT_TOL = 1e-7
INT_TOL = 1e-6


class StructuralError(ValueError):
    pass


@dataclass
class Column:
    cost: float
    coefs: dict  # row index -> coefficient (canonical orientation)
    lb: float = 0.0
    ub: float = np.inf
    integer: bool = False
    tag: object = None


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | error
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = np.nan
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class LpProblem:
    """min c^T x  s.t.  canonical rows, lb <= x <= ub."""

    def __init__(self):
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.columns: list[Column] = []

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def add_row(self, sense: str, rhs: float, name: str = "") -> int:
        """Add an empty row; returns its index. ``<=`` rows are stored negated, see ``row_sign``."""
        if sense not in (">=", "<=", "="):
            raise StructuralError(f"unknown row sense {sense!r}")
        self.senses.append("=" if sense == "=" else ">=")
        self.rhs.append(-float(rhs) if sense == "<=" else float(rhs))
        self.row_names.append(name or f"r{len(self.rhs) - 1}")
        return len(self.rhs) - 1

    def add_column(self, column: Column) -> int:
        for r, v in column.coefs.items():
            if not 0 <= r < self.n_rows:
                raise StructuralError(f"column references row {r}, problem has {self.n_rows} rows")
            if not np.isfinite(v):
                raise StructuralError("column coefficients must be finite")
        if not np.isfinite(column.cost):
            raise StructuralError("column cost must be finite")
        self.columns.append(column)
        return len(self.columns) - 1

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.n_rows, len(self.columns)))
        for j, col in enumerate(self.columns):
            for r, v in col.coefs.items():
                A[r, j] += v
        return A

    def costs(self) -> np.ndarray:
        return np.array([c.cost for c in self.columns], dtype=float)

    def bounds(self):
        return [(c.lb, None if np.isinf(c.ub) else c.ub) for c in self.columns]

    def copy(self) -> "LpProblem":
        p = LpProblem()
        p.senses = list(self.senses)
        p.rhs = list(self.rhs)
        p.row_names = list(self.row_names)
        p.columns = [Column(c.cost, dict(c.coefs), c.lb, c.ub, c.integer, c.tag) for c in self.columns]
        return p

    def to_lp_text(self) -> str:
        """CPLEX-LP style dump for debugging."""
        def term(v, name):
            return f"{'+' if v >= 0 else '-'} {abs(v):.12g} {name}"

        names = [f"x{j}" for j in range(len(self.columns))]
        lines = ["Minimize", " obj: " + " ".join(term(c.cost, n) for c, n in zip(self.columns, names)), "Subject To"]
        A = self.matrix()
        for r in range(self.n_rows):
            terms = " ".join(term(A[r, j], names[j]) for j in np.nonzero(A[r])[0]) or "0 x0"
            op = ">=" if self.senses[r] == ">=" else "="
            lines.append(f" {self.row_names[r]}: {terms} {op} {self.rhs[r]:.12g}")
        lines.append("Bounds")
        for c, n in zip(self.columns, names):
            ub = "+inf" if np.isinf(c.ub) else f"{c.ub:.12g}"
            lines.append(f" {c.lb:.12g} <= {n} <= {ub}")
        ints = [n for c, n in zip(self.columns, names) if c.integer]
        if ints:
            lines += ["General", " " + " ".join(ints)]
        lines.append("End")
        return "\n".join(lines) + "\n"


def solve_lp(p: LpProblem, warm_basis=None, bounds_override: dict | None = None) -> LpSolution:
    """Solve to optimality and return primal values, canonical row duals and reduced costs.

    ``warm_basis`` is accepted for interface compatibility; HiGHS re-solves
    from scratch at this problem size.
    """
    n = len(p.columns)
    if n == 0:
        feasible = all((b <= FEAS_TOL if s == ">=" else abs(b) <= FEAS_TOL) for s, b in zip(p.senses, p.rhs))
        return LpSolution("optimal" if feasible else "infeasible", np.zeros(0), 0.0, np.zeros(p.n_rows), np.zeros(0))
    A = p.matrix()
    c = p.costs()
    bounds = p.bounds()
    for j, (lo, hi) in (bounds_override or {}).items():
        bounds[j] = (lo, None if hi is None or np.isinf(hi) else hi)
    ge = [r for r, s in enumerate(p.senses) if s == ">="]
    eq = [r for r, s in enumerate(p.senses) if s == "="]
    rhs = np.asarray(p.rhs, dtype=float)
    kwargs = {}
    if ge:
        kwargs["A_ub"] = -A[ge]
        kwargs["b_ub"] = -rhs[ge]
    if eq:
        kwargs["A_eq"] = A[eq]
        kwargs["b_eq"] = rhs[eq]
    res = linprog(c, bounds=bounds, method="highs", **kwargs)
    if res.status == 2:
        return LpSolution("infeasible")
    if res.status == 3:
        return LpSolution("unbounded")
    if res.status != 0:
        return LpSolution("error")
    duals = np.zeros(p.n_rows)
    if ge:
        duals[ge] = -np.asarray(res.ineqlin.marginals)
    if eq:
        duals[eq] = np.asarray(res.eqlin.marginals)
    reduced = c - A.T @ duals
    return LpSolution("optimal", np.asarray(res.x), float(res.fun), duals, reduced)


def add_column(p: LpProblem, column: Column) -> LpProblem:
    p.add_column(column)
    return p


def dual_objective(p: LpProblem, sol: LpSolution, bounds_override: dict | None = None) -> float:
    """b^T y plus the bound contributions of the reduced costs."""
    val = float(np.dot(p.rhs, sol.duals))
    for j, col in enumerate(p.columns):
        lo, hi = col.lb, col.ub
        if bounds_override and j in bounds_override:
            lo, hi = bounds_override[j]
            hi = np.inf if hi is None else hi
        d = sol.reduced_costs[j]
        if d > 0:
            val += d * lo
        elif d < 0:
            val += d * hi if np.isfinite(hi) else -np.inf
    return val


@dataclass
class IntegerResult:
    x: np.ndarray | None
    objective: float
    truncated: bool = False
    nodes: int = 0

    @property
    def found(self) -> bool:
        return self.x is not None


def solve_integer_restricted(p: LpProblem, integer_columns=None, node_cap: int = 10_000,
                             bounds_override: dict | None = None, cutoff: float = np.inf) -> IntegerResult:
    """Depth-first branch-and-bound over the existing columns only.

    ``integer_columns`` defaults to every column flagged ``integer``. Branches
    on the most fractional marked variable, exploring the nearer rounding first.
    """
    if integer_columns is None:
        integer_columns = [j for j, c in enumerate(p.columns) if c.integer]
    integer_columns = list(integer_columns)
    base = {j: (c.lb, c.ub) for j, c in enumerate(p.columns)}
    base.update(bounds_override or {})
    best_x, best_obj = None, cutoff
    stack = [dict()]
    nodes = 0
    while stack:
        if nodes >= node_cap:
            return IntegerResult(best_x, best_obj if best_x is not None else np.inf, True, nodes)
        fix = stack.pop()
        nodes += 1
        bounds = dict(base)
        bounds.update(fix)
        sol = solve_lp(p, bounds_override=bounds)
        if not sol.optimal or sol.objective >= best_obj - OPT_TOL * (1 + abs(best_obj if np.isfinite(best_obj) else 0)):
            continue
        frac = [(min(sol.x[j] - np.floor(sol.x[j]), np.ceil(sol.x[j]) - sol.x[j]), j) for j in integer_columns]
        frac = [(f, j) for f, j in frac if f > INT_TOL]
        if not frac:
            x = sol.x.copy()
            x[integer_columns] = np.round(x[integer_columns])
            best_x, best_obj = x, sol.objective
            continue
        _, j = max(frac, key=lambda t: (t[0], -t[1]))
        v = sol.x[j]
        lo, hi = bounds[j]
        down = dict(fix)
        down[j] = (lo, float(np.floor(v)))
        up = dict(fix)
        up[j] = (float(np.ceil(v)), hi)
        first, second = (down, up) if v - np.floor(v) < 0.5 else (up, down)
        stack.append(second)
        stack.append(first)
    return IntegerResult(best_x, best_obj if best_x is not None else np.inf, False, nodes)
