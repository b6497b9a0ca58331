"""Command-line entry point: ``cbnp solve | simulate | benchmark | cluster-stats``.

Exit codes: 0 success, 2 proven infeasible, 3 time limit reached, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import benchmarks, io, pricing
from .colgen import aux_bounds
from .instance import InstanceError, evaluate_plan

EXIT_OK, EXIT_INFEASIBLE, EXIT_TIME_LIMIT, EXIT_USAGE = 0, 2, 3, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cbnp", description="Branch-and-price for resource allocation under ODE dynamics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve an instance with branch-and-price")
    s.add_argument("--instance", required=True)
    s.add_argument("--eps", type=float, help="l-infinity clustering tolerance (enables clustering when > 0)")
    s.add_argument("--clustering", choices=["none", "linf", "kmeans"])
    s.add_argument("--gap", type=float)
    s.add_argument("--time-limit", type=float)
    s.add_argument("--branching", choices=["tri", "bi"])
    s.add_argument("--node-selection", choices=["best", "depth"])
    s.add_argument("--substeps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--log-csv", help="per-iteration column-generation log")
    s.add_argument("--trace-csv", help="one row per tree node")
    s.add_argument("--lp-dump", help="write the root master LP in text LP format")
    s.add_argument("--plot-dir", help="write allocation and trajectory CSVs here")
    s.add_argument("--trajectories", action="store_true", help="store trajectories in the solution file")

    m = sub.add_parser("simulate", help="evaluate a plan (default: do nothing)")
    m.add_argument("--instance", required=True)
    m.add_argument("--plan", help="solution JSON produced by solve")

    b = sub.add_parser("benchmark", help="run baseline allocations and the perturbation protocol")
    b.add_argument("--instance", required=True)
    b.add_argument("--methods", default="uniform,cost")
    b.add_argument("--samples", type=int, default=20, help="perturbation samples")
    b.add_argument("--magnitude", type=float, default=0.0, help="perturbation magnitude")
    b.add_argument("--csv")

    c = sub.add_parser("cluster-stats", help="per-epoch cluster counts and diameters")
    c.add_argument("--instance", required=True)
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--csv")
    return p


def _config_overrides(args) -> dict:
    out = {}
    for key in ("gap", "time_limit", "branching", "node_selection", "substeps", "seed", "clustering"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    if args.eps is not None:
        out["eps"] = args.eps
        if args.clustering is None and args.eps > 0:
            out["clustering"] = "linf"
    return out


def cmd_solve(args) -> int:
    from .tree import solve_tree

    inst = io.load_instance(args.instance)
    inst = inst.with_config(**_config_overrides(args))
    inst.config.validate()
    log_lines = ["node,iteration,objective,min_reduced_cost,columns_added"]
    sol = solve_tree(inst, log_sink=log_lines.append)
    if args.log_csv:
        with open(args.log_csv, "w") as fh:
            fh.write("\n".join(log_lines) + "\n")
    if args.trace_csv:
        with open(args.trace_csv, "w") as fh:
            fh.write(sol.tree.trace_csv())
    if args.lp_dump and sol.evaluator is not None and 0 in sol.evaluator.results:
        cg = sol.evaluator.cg
        master = cg.build_master(sol.evaluator.results[0].columns, aux_bounds(inst, ()))
        with open(args.lp_dump, "w") as fh:
            fh.write(master.to_lp_text())
    if sol.status == "infeasible":
        print("status: infeasible")
        return EXIT_INFEASIBLE
    inc = sol.incumbent
    label = "savings" if inst.objective == "savings" else "objective"
    value = -sol.objective if inst.objective == "savings" else sol.objective
    bound = -sol.bound if inst.objective == "savings" else sol.bound
    print(f"instance: {inst.name}  segments: {inst.n}  epochs: {inst.n_epochs}")
    print(f"status: {sol.status}  nodes: {len(sol.tree.nodes)}  columns: {sol.pool_size}  "
          f"colgen iterations: {sol.colgen_iterations}  time: {sol.tree.elapsed:.2f}s")
    if inc is not None:
        print(f"{label}: {value:.6f}  bound: {bound:.6f}  gap {100 * sol.gap:.3f}%")
        if not sol.proven:
            print("note: clustering active, bound is heuristic")
        if args.out:
            data = io.solution_to_dict(inst, inc.plans, inc.aux if len(inst.aux) else None, sol.status,
                                       sol.bound, sol.gap,
                                       {"nodes": len(sol.tree.nodes), "columns": sol.pool_size,
                                        "colgen_iterations": sol.colgen_iterations, "seconds": sol.tree.elapsed,
                                        "fractional_leaves": sol.tree.fractional_leaves},
                                       trajectories=args.trajectories)
            io.save_solution(data, args.out)
        if args.plot_dir:
            io.emit_plot_data(inst, inc.plans, args.plot_dir)
    else:
        print("no incumbent found")
    return EXIT_TIME_LIMIT if sol.status == "time_limit" else EXIT_OK


def cmd_simulate(args) -> int:
    inst = io.load_instance(args.instance)
    if args.plan:
        with open(args.plan) as fh:
            data = json.load(fh)
        plans, _ = io.plans_from_solution(inst, data)
    else:
        plans = [seg.do_nothing() for seg in inst.segments]
    grid = inst.grid_for_solver()
    costs = [evaluate_plan(seg, plans[i], grid) for i, seg in enumerate(inst.segments)]
    for seg, c in zip(inst.segments, costs):
        print(f"{seg.name}: cost {c:.6f}")
    total = float(sum(costs))
    if inst.objective == "savings":
        print(f"savings: {-total + 0.0:.6f}")
    else:
        print(f"objective: {total:.6f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    inst = io.load_instance(args.instance)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    reports = []
    for mth in methods:
        if mth == "uniform":
            reports.append(benchmarks.uniform_allocation(inst))
        elif mth == "cost":
            reports.append(benchmarks.cost_based_allocation(inst))
        elif mth == "topk":
            if inst.kind != "facility":
                print("topk applies to facility instances only", file=sys.stderr)
                return EXIT_USAGE
            reports.extend(benchmarks.top_k_reports(inst))
        elif mth == "optimized":
            reports.append(benchmarks.optimized(inst))
        else:
            print(f"unknown method {mth!r}", file=sys.stderr)
            return EXIT_USAGE
    for r in reports:
        line = f"{r.method}: objective {r.objective:.6f}  time {r.seconds:.2f}s  feasible {r.feasible}"
        if args.magnitude > 0 and r.plans is not None:
            pr = benchmarks.perturb_and_evaluate(inst, r.plans, args.magnitude, args.samples)
            line += f"  perturbed mean {pr.mean:.6f} [{pr.min:.6f}, {pr.max:.6f}] failed {pr.failed}"
        print(line)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(benchmarks.reports_csv(reports))
    return EXIT_OK


def cmd_cluster_stats(args) -> int:
    inst = io.load_instance(args.instance)
    if args.eps < 0:
        raise InstanceError("eps", "clustering tolerance must be non-negative")
    grid = inst.grid_for_solver()
    rows = []
    for i, seg in enumerate(inst.segments):
        sp = pricing.cluster_states(seg, grid, args.eps)
        for level, k, q, diam in pricing.cluster_report(sp):
            rows.append((seg.name, level, k, q, diam))
    worst = max((r[4] for r in rows), default=0.0)
    for r in rows:
        print(f"{r[0]} level {r[1]}: {r[2]} clusters from {r[3]} successors, max diameter {r[4]:.3g}")
    print(f"max diameter {worst:.6g}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("segment,level,clusters,successors,max_diameter\n")
            for r in rows:
                fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]:.12g}\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"solve": cmd_solve, "simulate": cmd_simulate, "benchmark": cmd_benchmark,
                "cluster-stats": cmd_cluster_stats}
    try:
        return handlers[args.command](args)
    except InstanceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
