"""Builders for the desk-scale instances of every problem kind and for random test instances."""
from __future__ import annotations

import numpy as np

from .instance import AuxVar, CouplingRow, Instance, Segment, SolverConfig, set_baselines
from .models import AffineModel, BassModel, DelphiV, Sair2Model, city_rates_model
from .models.delphi import initial_state
from .ode import EpochGrid


def _finish(inst: Instance) -> Instance:
    inst.validate()
    return set_baselines(inst)


def vaccine_instance(n: int = 6, n_epochs: int = 4, levels: int = 6, budget_pallets: int = 12,
                     pallet: int = 10_000, seed: int = 0, week: float = 7.0, config: SolverConfig | None = None,
                     name: str = "vaccine") -> Instance:
    """Regions with heterogeneous severity and prevalence; decisions are 0..levels-1 pallets per week."""
    rng = np.random.default_rng(seed)
    segments = []
    for i in range(n):
        alpha = 0.3 if i % 2 == 0 else 0.6
        model = DelphiV(alpha=float(alpha * rng.uniform(0.9, 1.1)), population=float(rng.choice([0.8e6, 1e6, 1.5e6])),
                        pallet=pallet, r_death=float(rng.uniform(0.03, 0.07)))
        m0 = initial_state(infected=float(rng.uniform(0.005, 0.02)), exposed=float(rng.uniform(0.002, 0.01)))
        dec = [np.arange(levels, dtype=float)[:, None] * pallet for _ in range(n_epochs)]
        segments.append(Segment(f"region{i}", model, m0, dec))
    budget = [float(budget_pallets * pallet)] * n_epochs
    rows = [CouplingRow(f"budget_{s}", "<=", budget[s], {(i, s): [1.0] for i in range(n)}) for s in range(n_epochs)]
    inst = Instance("vaccine", EpochGrid.uniform(n_epochs, week), segments, rows, objective="savings",
                    config=config or SolverConfig(), name=name,
                    meta={"budget": [budget], "unit": [float(pallet)], "pallet": float(pallet)})
    return _finish(inst)


def vaccine_desk() -> Instance:
    return vaccine_instance(name="vaccine_desk")


def facility_instance(n: int = 3, n_facilities: int = 3, K: int = 2, n_epochs: int = 3, levels: int = 4,
                      budget_pallets: int = 5, pallet: int = 10_000, seed: int = 1,
                      config: SolverConfig | None = None, name: str = "facility") -> Instance:
    """Vaccination centres: pick K of F sites, route pallets to regions within coverage and capacity."""
    rng = np.random.default_rng(seed)
    F, S, L = n_facilities, n_epochs, float(pallet)
    segments = []
    for i in range(n):
        model = DelphiV(alpha=0.3 if i % 2 == 0 else 0.6, population=1e6, pallet=pallet)
        m0 = initial_state(infected=float(rng.uniform(0.005, 0.02)), exposed=float(rng.uniform(0.002, 0.01)))
        dec = [np.arange(levels, dtype=float)[:, None] * L for _ in range(S)]
        segments.append(Segment(f"region{i}", model, m0, dec))
    cap = np.round(rng.uniform(2, 4, size=(F, S))) * L
    cover = np.round(rng.uniform(0, 1, size=(n, F)) * 8) * L
    cover[np.arange(n), np.arange(n) % F] = 8 * L  # every region has a home facility
    budget = [float(budget_pallets * L)] * S
    aux = [AuxVar(f"y{j}", 0.0, 0.0, 1.0, True) for j in range(F)]

    def flow(i, j, s):
        return F + (i * F + j) * S + s

    for i in range(n):
        for j in range(F):
            for s in range(S):
                aux.append(AuxVar(f"x_{i}_{j}_{s}", 0.0, 0.0, float(min(cap[j, s], cover[i, j]))))
    rows = [CouplingRow("facilities", "=", float(K), {}, {j: 1.0 for j in range(F)})]
    for s in range(S):
        rows.append(CouplingRow(f"budget_{s}", "<=", budget[s], {}, {flow(i, j, s): 1.0 for i in range(n) for j in range(F)}))
    for j in range(F):
        for s in range(S):
            rows.append(CouplingRow(f"cap_{j}_{s}", "<=", float(cap[j, s]), {}, {flow(i, j, s): 1.0 for i in range(n)}))
    for i in range(n):
        for j in range(F):
            rows.append(CouplingRow(f"cover_{i}_{j}", "<=", float(cover[i, j]), {}, {flow(i, j, s): 1.0 for s in range(S)}))
    for i in range(n):
        for j in range(F):
            for s in range(S):
                rows.append(CouplingRow(f"link_{i}_{j}_{s}", "<=", 0.0, {},
                                        {flow(i, j, s): 1.0, j: -float(min(cap[j, s], cover[i, j]))}))
    for i in range(n):
        for s in range(S):
            rows.append(CouplingRow(f"consistency_{i}_{s}", "=", 0.0, {(i, s): [1.0]},
                                    {flow(i, j, s): -1.0 for j in range(F)}))
    meta = {"budget": [budget], "unit": [L], "pallet": L, "K": K, "facilities": F,
            "capacity": cap.tolist(), "coverage": cover.tolist()}
    inst = Instance("facility", EpochGrid.uniform(S, 7.0), segments, rows, aux, "savings",
                    config or SolverConfig(), name, meta)
    return _finish(inst)


def facility_desk() -> Instance:
    return facility_instance(name="facility_desk")


def bass_decisions(increment: float, n_epochs: int) -> list:
    steps = int(round(1.0 / increment))
    dec = np.array([[0.0, 0.0]] + [[1.0, k * increment] for k in range(1, steps + 1)])
    return [dec.copy() for _ in range(n_epochs)]


def content_instance(n: int = 4, n_epochs: int = 3, K: int = 2, increment: float = 0.25, seed: int = 2,
                     config: SolverConfig | None = None, name: str = "content") -> Instance:
    """Products with Bass dynamics; promote at most K per epoch and show every user one product."""
    rng = np.random.default_rng(seed)
    segments = []
    for i in range(n):
        model = BassModel(alpha=float(rng.uniform(0.2, 0.8)), beta=float(rng.uniform(0.1, 0.6)), m=1.0,
                          increment=increment, sparsity=K)
        b0 = float(rng.uniform(0.01, 0.1))
        segments.append(Segment(f"product{i}", model, [1.0 - b0, b0], bass_decisions(increment, n_epochs)))
    rows = []
    for s in range(n_epochs):
        rows.append(CouplingRow(f"sparsity_{s}", "<=", float(K), {(i, s): [1.0, 0.0] for i in range(n)}))
        rows.append(CouplingRow(f"cover_{s}", "=", 1.0, {(i, s): [0.0, 1.0] for i in range(n)}))
    inst = Instance("content", EpochGrid.uniform(n_epochs, 1.0), segments, rows, objective="savings",
                    config=config or SolverConfig(), name=name, meta={"sparsity": K, "increment": increment})
    return _finish(inst)


def content_desk() -> Instance:
    return content_instance(name="content_desk")


def congestion_instance(regions=("West", "Central", "North"), period: str = "morning", n_epochs: int = 3,
                        budget=(3, 3), config: SolverConfig | None = None, name: str = "congestion",
                        seed: int = 3) -> Instance:
    """Neighbourhoods with 2-SAIR dynamics sharing treatment and prevention vehicles each epoch."""
    rng = np.random.default_rng(seed)
    n = len(regions)
    b1, b2 = budget
    grid_vals = [(a, b) for a in range(b1 + 1) for b in range(b2 + 1)]
    segments = []
    for r in regions:
        model = city_rates_model(period, r, n_segments=n, budget_treatment=float(b1), budget_prevention=float(b2))
        acc = float(rng.uniform(0.02, 0.08))
        jam = float(rng.uniform(0.05, 0.15))
        m0 = [1.0 - 0.1 - acc - jam, 0.1, acc, 0.0, jam, 0.0]
        dec = [np.array(grid_vals, dtype=float) for _ in range(n_epochs)]
        segments.append(Segment(r, model, m0, dec))
    rows = []
    for s in range(n_epochs):
        rows.append(CouplingRow(f"treatment_{s}", "<=", float(b1), {(i, s): [1.0, 0.0] for i in range(n)}))
        rows.append(CouplingRow(f"prevention_{s}", "<=", float(b2), {(i, s): [0.0, 1.0] for i in range(n)}))
    inst = Instance("congestion", EpochGrid.uniform(n_epochs, 1.0), segments, rows, objective="savings",
                    config=config or SolverConfig(), name=name,
                    meta={"budget": [[float(b1)] * n_epochs, [float(b2)] * n_epochs], "unit": [1.0, 1.0]})
    return _finish(inst)


def congestion_desk() -> Instance:
    return congestion_instance(name="congestion_desk")


def random_generic(rng: np.random.Generator, n: int = 2, n_epochs: int = 2, levels: int = 3, dim: int = 1,
                   coupled: bool = True, config: SolverConfig | None = None, name: str = "generic") -> Instance:
    """Affine dynamics with indefinite quadratic terminal cost and per-epoch budget rows."""
    segments = []
    for i in range(n):
        A = rng.uniform(-0.5, 0.3, size=(dim, dim))
        B = rng.uniform(0.2, 1.0, size=(dim, 1))
        c = rng.uniform(-0.2, 0.2, size=dim)
        q = rng.uniform(-1.0, 1.0, size=dim)
        h_lin = rng.uniform(-1.0, 1.0, size=dim)
        H = rng.uniform(-1.0, 1.0, size=(dim, dim))
        model = AffineModel(tuple(map(tuple, A)), tuple(map(tuple, B)), tuple(c), tuple(q), tuple(h_lin),
                            tuple(map(tuple, 0.5 * (H + H.T))))
        dec = [np.sort(rng.choice(np.arange(0, 2 * levels), size=levels, replace=False)).astype(float)[:, None]
               for _ in range(n_epochs)]
        segments.append(Segment(f"seg{i}", model, rng.uniform(-1, 1, size=dim), dec))
    rows = []
    if coupled:
        for s in range(n_epochs):
            cap = float(np.sum([np.median(seg.decisions[s]) for seg in segments]))
            rows.append(CouplingRow(f"budget_{s}", "<=", cap, {(i, s): [1.0] for i in range(n)}))
    inst = Instance("generic", EpochGrid.uniform(n_epochs, 1.0, substeps=10), segments, rows,
                    config=config or SolverConfig(gap=0.0), name=name)
    inst.config.substeps = 10
    return _finish(inst)


def tripartite_fixture(config: SolverConfig | None = None) -> Instance:
    """Concave plan costs: dM/dt = u with terminal cost -M^2 and a shared budget of 2 per epoch.

    Splitting a segment between the all-zero and all-four plans halves the
    budget use but doubles the modelled benefit, so the relaxation averages
    plans whose mean allocation is itself a feasible decision.
    """
    model = AffineModel(((0.0,),), ((1.0,),), (0.0,), (0.0,), (0.0,), ((-2.0,),))
    S = 2
    dec = [np.arange(5, dtype=float)[:, None] for _ in range(S)]
    segments = [Segment(f"seg{i}", model, [0.0], [d.copy() for d in dec]) for i in range(2)]
    rows = [CouplingRow(f"budget_{s}", "<=", 2.0, {(i, s): [1.0] for i in range(2)}) for s in range(S)]
    inst = Instance("generic", EpochGrid.uniform(S, 1.0, substeps=4), segments, rows,
                    config=config or SolverConfig(gap=1e-3, substeps=4), name="tripartite")
    return _finish(inst)


def exhaustive_fixture() -> Instance:
    """Two segments, two epochs, three decisions: 81 joint sequences."""
    return random_generic(np.random.default_rng(81), n=2, n_epochs=2, levels=3, name="exhaustive81")


DESK_BUILDERS = {
    "vaccine_desk": vaccine_desk,
    "facility_desk": facility_desk,
    "content_desk": content_desk,
    "congestion_desk": congestion_desk,
    "exhaustive81": exhaustive_fixture,
    "tripartite": tripartite_fixture,
}
