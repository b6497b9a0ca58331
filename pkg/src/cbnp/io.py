"""JSON instance and solution files, validation, and CSV plot data."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, fields

import numpy as np

from . import ode
from .instance import (AuxVar, CouplingRow, Instance, InstanceError, Segment, SolverConfig, evaluate_plan,
                       check_solution, set_baselines)
from .models import model_from_dict, model_to_dict

SCHEMA_VERSION = 1
KINDS = ("vaccine", "facility", "content", "congestion", "generic")


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if np.isinf(v) else v


def instance_to_dict(inst: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": inst.name,
        "kind": inst.kind,
        "objective": inst.objective,
        "grid": {"timestamps": list(inst.grid.timestamps), "substeps": inst.grid.substeps},
        "segments": [
            {
                "name": seg.name,
                "model": model_to_dict(seg.model),
                "initial_state": seg.m0.tolist(),
                "decisions": [d.tolist() for d in seg.decisions],
            }
            for seg in inst.segments
        ],
        "rows": [
            {
                "name": row.name,
                "sense": row.sense,
                "rhs": row.rhs,
                "plan_terms": [{"segment": i, "epoch": s, "coef": c.tolist()} for (i, s), c in row.plan_terms.items()],
                "aux_terms": [{"aux": l, "coef": c} for l, c in row.aux_terms.items()],
            }
            for row in inst.rows
        ],
        "aux": [{"name": a.name, "cost": a.cost, "lb": _num(a.lb), "ub": _num(a.ub), "integer": a.integer}
                for a in inst.aux],
        "meta": inst.meta,
        "config": asdict(inst.config),
    }


def _need(d, key, path, kind=None):
    if not isinstance(d, dict) or key not in d:
        raise InstanceError(f"{path}.{key}" if path else key, "missing required field")
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise InstanceError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return v


def _array(v, path, ndim):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise InstanceError(path, "expected numeric array") from None
    if a.ndim != ndim:
        raise InstanceError(path, f"expected a {ndim}-dimensional array")
    if not np.all(np.isfinite(a)):
        raise InstanceError(path, "entries must be finite")
    return a


def instance_from_dict(data: dict) -> Instance:
    if not isinstance(data, dict):
        raise InstanceError("$", "top level must be an object")
    version = _need(data, "schema_version", "", int)
    if version != SCHEMA_VERSION:
        raise InstanceError("schema_version", f"unsupported version {version}")
    kind = _need(data, "kind", "", str)
    if kind not in KINDS:
        raise InstanceError("kind", f"must be one of {', '.join(KINDS)}")
    g = _need(data, "grid", "", dict)
    try:
        grid = ode.EpochGrid(tuple(_array(_need(g, "timestamps", "grid"), "grid.timestamps", 1)), int(g.get("substeps", ode.DEFAULT_SUBSTEPS)))
    except ValueError as e:
        raise InstanceError("grid", str(e)) from None
    segments = []
    for i, sd in enumerate(_need(data, "segments", "", list)):
        p = f"segments[{i}]"
        md = _need(sd, "model", p, dict)
        try:
            model = model_from_dict(md)
        except (TypeError, ValueError, KeyError) as e:
            raise InstanceError(f"{p}.model", str(e)) from None
        m0 = _array(_need(sd, "initial_state", p), f"{p}.initial_state", 1)
        decs = []
        for s, dv in enumerate(_need(sd, "decisions", p, list)):
            if isinstance(dv, list) and len(dv) == 0:
                raise InstanceError(f"{p}.decisions[{s}]", "decision set is empty")
            decs.append(_array(dv, f"{p}.decisions[{s}]", 2))
        segments.append(Segment(str(sd.get("name", f"segment{i}")), model, m0, decs))
    rows = []
    for r, rd in enumerate(data.get("rows", [])):
        p = f"rows[{r}]"
        sense = _need(rd, "sense", p, str)
        if sense not in (">=", "<=", "="):
            raise InstanceError(f"{p}.sense", "must be one of >=, <=, =")
        terms = {}
        for t, td in enumerate(rd.get("plan_terms", [])):
            key = (int(_need(td, "segment", f"{p}.plan_terms[{t}]")), int(_need(td, "epoch", f"{p}.plan_terms[{t}]")))
            terms[key] = _array(_need(td, "coef", f"{p}.plan_terms[{t}]"), f"{p}.plan_terms[{t}].coef", 1)
        aux_terms = {int(_need(a, "aux", f"{p}.aux_terms[{t}]")): float(_need(a, "coef", f"{p}.aux_terms[{t}]"))
                     for t, a in enumerate(rd.get("aux_terms", []))}
        rows.append(CouplingRow(str(rd.get("name", f"row{r}")), sense, float(_need(rd, "rhs", p)), terms, aux_terms))
    aux = []
    for l, ad in enumerate(data.get("aux", [])):
        lb = ad.get("lb", 0.0)
        ub = ad.get("ub")
        aux.append(AuxVar(str(ad.get("name", f"aux{l}")), float(ad.get("cost", 0.0)),
                          -np.inf if lb is None else float(lb), np.inf if ub is None else float(ub),
                          bool(ad.get("integer", False))))
    cfg_data = data.get("config", {})
    known = {f.name for f in fields(SolverConfig)}
    unknown = set(cfg_data) - known
    if unknown:
        raise InstanceError(f"config.{sorted(unknown)[0]}", "unknown solver option")
    try:
        config = SolverConfig(**cfg_data)
    except TypeError as e:
        raise InstanceError("config", str(e)) from None
    inst = Instance(kind, grid, segments, rows, aux, str(data.get("objective", "min")), config,
                    str(data.get("name", "")), dict(data.get("meta", {})))
    inst.validate()
    return set_baselines(inst)


def parse_instance(text: str | bytes) -> Instance:
    raw = text.encode() if isinstance(text, str) else text
    decoded = raw.decode("utf-8", errors="replace")
    try:
        data = json.loads(decoded)
    except json.JSONDecodeError as e:
        offset = len(decoded[:e.pos].encode("utf-8"))
        raise InstanceError("$", f"parse error at byte offset {offset}: {e.msg}") from None
    return instance_from_dict(data)


def load_instance(path) -> Instance:
    with open(path, "rb") as fh:
        return parse_instance(fh.read())


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1)
        fh.write("\n")


def shipped_path(name: str) -> str:
    return os.path.join(os.path.dirname(__file__), "data", f"{name}.json")


def load_shipped(name: str) -> Instance:
    return load_instance(shipped_path(name))


# -- solutions ---------------------------------------------------------------

def solution_to_dict(inst: Instance, plans, aux=None, status: str = "optimal", bound: float | None = None,
                     gap: float | None = None, stats: dict | None = None, trajectories: bool = False) -> dict:
    grid = inst.grid_for_solver()
    costs = [evaluate_plan(seg, plans[i], grid) for i, seg in enumerate(inst.segments)]
    obj = float(sum(costs) + (sum(a.cost * v for a, v in zip(inst.aux, aux)) if aux is not None else 0.0))
    out = {
        "schema_version": SCHEMA_VERSION,
        "instance": inst.name,
        "status": status,
        "objective": obj,
        "savings": -obj if inst.objective == "savings" else None,
        "bound": bound,
        "gap": gap,
        "plans": [{"segment": seg.name, "decisions": np.asarray(plans[i]).tolist(), "cost": costs[i]}
                  for i, seg in enumerate(inst.segments)],
        "aux": None if aux is None else [float(v) for v in aux],
        "stats": stats or {},
    }
    if trajectories:
        out["trajectories"] = [ode.integrate(seg.model, seg.m0, plans[i], grid).states.tolist()
                               for i, seg in enumerate(inst.segments)]
    return out


def save_solution(data: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def plans_from_solution(inst: Instance, data: dict) -> tuple:
    plans = [np.array(p["decisions"], dtype=float).reshape(inst.n_epochs, -1) for p in data["plans"]]
    if len(plans) != inst.n:
        raise InstanceError("plans", f"expected {inst.n} plans, got {len(plans)}")
    aux = None if data.get("aux") is None else np.array(data["aux"], dtype=float)
    return plans, aux


def validate_solution(inst: Instance, data: dict, rtol: float = 1e-6) -> tuple[bool, float]:
    """Recompute the objective from the decisions alone; returns (valid, recomputed objective)."""
    plans, aux = plans_from_solution(inst, data)
    if not check_solution(inst, plans, aux):
        return False, np.nan
    grid = inst.grid_for_solver()
    obj = sum(evaluate_plan(seg, plans[i], grid) for i, seg in enumerate(inst.segments))
    if aux is not None:
        obj += sum(a.cost * v for a, v in zip(inst.aux, aux))
    stated = float(data["objective"])
    return abs(obj - stated) <= rtol * max(1.0, abs(stated)), float(obj)


# -- plot data ---------------------------------------------------------------

def emit_plot_data(inst: Instance, plans, out_dir) -> tuple[str, str]:
    """Long-format allocation and trajectory CSVs for heatmaps and time plots."""
    os.makedirs(out_dir, exist_ok=True)
    alloc = os.path.join(out_dir, "allocation.csv")
    traj = os.path.join(out_dir, "trajectory.csv")
    grid = inst.grid_for_solver()
    with open(alloc, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "epoch", "resource", "amount"])
        for i, seg in enumerate(inst.segments):
            for k, name in enumerate(seg.model.control_names):
                for s in range(inst.n_epochs):
                    w.writerow([seg.name, s, name, repr(float(plans[i][s][k]))])
    with open(traj, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "time", "compartment", "value"])
        for i, seg in enumerate(inst.segments):
            tr = ode.integrate(seg.model, seg.m0, plans[i], grid)
            for t, state in zip(tr.times, tr.states):
                for name, v in zip(seg.model.compartments, state):
                    w.writerow([seg.name, repr(float(t)), name, repr(float(v))])
    return alloc, traj
