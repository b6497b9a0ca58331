"""Pricing oracle: exact forward enumeration, streaming l-infinity state clustering,
k-means clustering, and backward induction over any of the resulting spaces.

A state space stores ``S + 1`` levels of states. Level ``s`` holds the states
reachable at ``tau_s``; epoch ``s`` maps level ``s`` to level ``s + 1`` under
each allowed decision. Stage costs are raw (running cost plus decision cost,
with the terminal cost folded into the last epoch); the segment baseline is
subtracted once when a plan cost is reported.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ode

REDUCED_COST_TOL = -1e-7


class SizeError(RuntimeError):
    pass


@dataclass
class ClusterStats:
    """Per-level cluster summaries: member counts, sums, componentwise envelopes and cost sums."""

    eta: np.ndarray
    sums: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    cost_sums: np.ndarray
    labels: np.ndarray  # cluster of every candidate, in streaming order

    @property
    def centroids(self) -> np.ndarray:
        return self.sums / self.eta[:, None]

    @property
    def diameters(self) -> np.ndarray:
        if self.eta.size == 0:
            return np.zeros(0)
        return np.max(self.hi - self.lo, axis=1)

    def mean_member_distance(self, points: np.ndarray) -> float:
        """Average l-infinity distance from each candidate to its own centroid."""
        return float(np.mean(np.max(np.abs(points - self.centroids[self.labels]), axis=1)))

    def max_member_distance(self, points: np.ndarray) -> float:
        return float(np.max(np.max(np.abs(points - self.centroids[self.labels]), axis=1)))


@dataclass
class StateSpace:
    kind: str  # exact | linf | kmeans
    states: list
    allowed: list
    succ: list
    cost: list
    clusters: list = field(default_factory=list)  # ClusterStats for levels 1..S (clustered kinds)
    candidates: list = field(default_factory=list)  # raw successor points per level (clustered kinds)

    @property
    def n_epochs(self) -> int:
        return len(self.succ)

    @property
    def n_states(self) -> int:
        return int(sum(len(x) for x in self.states))

    def level_sizes(self) -> list:
        return [len(x) for x in self.states]


@dataclass
class PricingResult:
    decisions: np.ndarray  # (S, d)
    indices: np.ndarray  # (S,) indices into the segment's full decision sets
    reduced_cost: float
    dp_cost: float
    values: list = field(default_factory=list)  # J_s per level
    path: list = field(default_factory=list)  # state index per level along the optimal path


def allowed_all(segment) -> list:
    return [np.arange(len(d)) for d in segment.decisions]


def _decision_costs(segment, s, idx) -> np.ndarray:
    dec = segment.decisions[s][idx]
    return np.array([segment.model.decision_cost(x, s) for x in dec], dtype=float)


def _expand(segment, grid, s, states, idx, terminal: bool):
    """All successors of ``states`` under decisions ``idx`` of epoch ``s`` (state-major order)."""
    dec = segment.decisions[s][idx]
    n, D = len(states), len(idx)
    X = np.repeat(states, D, axis=0)
    U = np.tile(dec, (n, 1))
    nxt, cost = ode.propagate(segment.model, X, U, grid, s)
    if terminal:
        cost = cost + segment.model.terminal_cost(nxt)
    return nxt, cost.reshape(n, D)


def forward_enumerate(segment, grid, allowed=None, cap: int = 10_000_000) -> StateSpace:
    """Breadth-first expansion of every decision sequence, without deduplication."""
    allowed = allowed_all(segment) if allowed is None else [np.asarray(a, dtype=int) for a in allowed]
    S = grid.n_epochs
    pairs, n = 0, 1
    for s in range(S):
        pairs += n * len(allowed[s])
        n *= len(allowed[s])
    if pairs > cap:
        raise SizeError(f"exact enumeration needs {pairs} state-decision pairs (cap {cap}); enable clustering")
    states = [segment.m0[None, :].copy()]
    succ, cost = [], []
    for s in range(S):
        nxt, c = _expand(segment, grid, s, states[s], allowed[s], s == S - 1)
        c = c + _decision_costs(segment, s, allowed[s])[None, :]
        states.append(nxt)
        succ.append(np.arange(nxt.shape[0]).reshape(c.shape))
        cost.append(c)
    return StateSpace("exact", states, allowed, succ, cost)


def stream_cluster(points, eps: float) -> ClusterStats:
    """Single streaming pass with the min-max envelope rule.

    A point joins the cluster minimising ``max(|N - lo|_inf, |N - hi|_inf)``
    when that value is at most ``eps`` (lowest index wins ties), otherwise it
    opens a new cluster.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    Q, r = pts.shape
    lo = np.empty((Q, r))
    hi = np.empty((Q, r))
    sums = np.zeros((Q, r))
    eta = np.zeros(Q, dtype=int)
    labels = np.empty(Q, dtype=int)
    k = 0
    for q in range(Q):
        p = pts[q]
        best = -1
        if k:
            d = np.maximum(np.max(np.abs(p - lo[:k]), axis=1), np.max(np.abs(p - hi[:k]), axis=1))
            j = int(np.argmin(d))
            if d[j] <= eps:
                best = j
        if best < 0:
            best = k
            lo[k] = p
            hi[k] = p
            k += 1
        else:
            np.minimum(lo[best], p, out=lo[best])
            np.maximum(hi[best], p, out=hi[best])
        sums[best] += p
        eta[best] += 1
        labels[q] = best
    return ClusterStats(eta[:k].astype(float), sums[:k], lo[:k], hi[:k], np.zeros(k), labels)


def _stats_from_labels(points: np.ndarray, labels: np.ndarray, k: int) -> ClusterStats:
    r = points.shape[1]
    eta = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, r))
    np.add.at(sums, labels, points)
    lo = np.full((k, r), np.inf)
    hi = np.full((k, r), -np.inf)
    np.minimum.at(lo, labels, points)
    np.maximum.at(hi, labels, points)
    return ClusterStats(eta, sums, lo, hi, np.zeros(k), labels)


def _lloyd(pts: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> tuple[np.ndarray, float]:
    Q = pts.shape[0]
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(Q)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(Q, p=d2 / total)) if total > 0 else int(rng.integers(Q))
        centers[j] = pts[idx]
        d2 = np.minimum(d2, np.sum((pts - centers[j]) ** 2, axis=1))
    labels = np.zeros(Q, dtype=int)
    for it in range(max_iter):
        dist = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(dist, axis=1)
        if it > 0 and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = pts[members].mean(axis=0)
    inertia = float(np.sum((pts - centers[labels]) ** 2))
    return labels, inertia


def kmeans_labels(points, k: int, rng: np.random.Generator, max_iter: int = 50, n_init: int = 10) -> np.ndarray:
    """Lloyd's algorithm from ``n_init`` k-means++ starts, keeping the lowest inertia.

    Empty clusters are dropped and labels compacted.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    k = max(1, min(int(k), pts.shape[0]))
    best, best_inertia = None, np.inf
    for _ in range(max(1, n_init)):
        labels, inertia = _lloyd(pts, k, rng, max_iter)
        if inertia < best_inertia - 1e-15:
            best, best_inertia = labels, inertia
    _, compact = np.unique(best, return_inverse=True)
    return compact


def _clustered_space(segment, grid, allowed, assign, kind: str) -> StateSpace:
    allowed = allowed_all(segment) if allowed is None else [np.asarray(a, dtype=int) for a in allowed]
    S = grid.n_epochs
    states = [segment.m0[None, :].copy()]
    succ, cost, clusters, cands = [], [], [], []
    for s in range(S):
        nxt, c = _expand(segment, grid, s, states[s], allowed[s], s == S - 1)
        stats = assign(s, nxt)
        flat = c.reshape(-1)
        stats.cost_sums = np.bincount(stats.labels, weights=flat, minlength=len(stats.eta))
        mean_cost = stats.cost_sums / stats.eta
        pair_cost = mean_cost[stats.labels].reshape(c.shape) + _decision_costs(segment, s, allowed[s])[None, :]
        states.append(stats.centroids)
        succ.append(stats.labels.reshape(c.shape))
        cost.append(pair_cost)
        clusters.append(stats)
        cands.append(nxt)
    return StateSpace(kind, states, allowed, succ, cost, clusters, cands)


def cluster_states(segment, grid, eps: float, allowed=None) -> StateSpace:
    """Clustered space built level by level from successors of the previous level's centroids."""
    if eps < 0:
        raise ValueError("clustering tolerance must be non-negative")
    return _clustered_space(segment, grid, allowed, lambda s, pts: stream_cluster(pts, eps), "linf")


def kmeans_cluster(segment, grid, k, seed: int = 0, allowed=None) -> StateSpace:
    """Same construction with k-means partitions; ``k`` is an int or one count per epoch."""
    ks = [k] * grid.n_epochs if np.isscalar(k) else list(k)
    if any(int(v) < 1 for v in ks):
        raise ValueError("k must be at least 1")

    def assign(s, pts):
        rng = np.random.default_rng([int(seed), s])
        labels = kmeans_labels(pts, ks[s], rng)
        return _stats_from_labels(pts, labels, int(labels.max()) + 1)

    return _clustered_space(segment, grid, allowed, assign, "kmeans")


def backward_induct(space: StateSpace, segment, adjust=None, mu: float = 0.0) -> PricingResult:
    """Minimise stage cost plus dual adjustment over the space.

    ``adjust[s]`` is a vector over the allowed decisions of epoch ``s`` added
    to every stage cost (typically ``-lambda^T u x``). ``mu`` is subtracted at
    the end of the horizon. Ties go to the lowest decision index.
    """
    S = space.n_epochs
    adjust = [np.zeros(len(a)) for a in space.allowed] if adjust is None else adjust
    J = [None] * (S + 1)
    J[S] = np.full(len(space.states[S]), -float(mu))
    policy = [None] * S
    for s in range(S - 1, -1, -1):
        q = space.cost[s] + adjust[s][None, :] + J[s + 1][space.succ[s]]
        policy[s] = np.argmin(q, axis=1)
        J[s] = q[np.arange(q.shape[0]), policy[s]]
    node, path, idx, raw = 0, [0], [], 0.0
    for s in range(S):
        j = int(policy[s][node])
        idx.append(int(space.allowed[s][j]))
        raw += float(space.cost[s][node, j])
        node = int(space.succ[s][node, j])
        path.append(node)
    idx = np.array(idx, dtype=int)
    decisions = np.array([segment.decisions[s][idx[s]] for s in range(S)])
    return PricingResult(decisions, idx, float(J[0][0]) - segment.baseline, raw - segment.baseline, J, path)


def bellman_residual(space: StateSpace, result: PricingResult, adjust=None) -> float:
    """Largest violation of J_s = stage + J_{s+1} along the returned path."""
    adjust = [np.zeros(len(a)) for a in space.allowed] if adjust is None else adjust
    worst = 0.0
    for s in range(space.n_epochs):
        n = result.path[s]
        j = int(np.searchsorted(space.allowed[s], result.indices[s]))
        lhs = result.values[s][n]
        rhs = space.cost[s][n, j] + adjust[s][j] + result.values[s + 1][result.path[s + 1]]
        worst = max(worst, abs(lhs - rhs))
    return worst


def estimate_lipschitz(segment, grid, s: int, point_sets, allowed_idx, rng, n_random: int = 200,
                       h: float = 1e-6) -> float:
    """Largest sampled l-infinity operator norm of the state Jacobian of the vector field in epoch ``s``."""
    pts = np.concatenate([np.atleast_2d(p) for p in point_sets], axis=0)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * (hi - lo)
    extra = rng.uniform(lo - pad, hi + pad, size=(n_random, pts.shape[1]))
    pts = np.concatenate([pts, extra], axis=0)
    dec = ode.control_rate(segment.model, segment.decisions[s][allowed_idx], grid.length(s))
    r = pts.shape[1]
    best = 0.0
    for u in dec:
        U = np.repeat(u[None, :], pts.shape[0], axis=0)
        jac = np.empty((pts.shape[0], r, r))
        for j in range(r):
            e = np.zeros(r)
            e[j] = h * max(1.0, float(np.max(np.abs(pts[:, j]))))
            fp = segment.model.derivative(pts + e, U, s)
            fm = segment.model.derivative(pts - e, U, s)
            jac[:, :, j] = (fp - fm) / (2 * e[j])
        best = max(best, float(np.max(np.sum(np.abs(jac), axis=2))))
    return best


@dataclass
class BoundCheck:
    level: int
    max_distance: float
    bound: float
    lipschitz: float

    @property
    def ok(self) -> bool:
        return self.max_distance <= self.bound


def error_bound_check(segment, grid, eps: float, allowed=None, seed: int = 0) -> list:
    """Distance from every exact state to its nearest clustered centroid versus the
    propagated clustering bound ``b_{s+1} = exp(L_s dt_s) b_s + eps`` (``b_0 = 0``)."""
    exact = forward_enumerate(segment, grid, allowed)
    clus = cluster_states(segment, grid, eps, allowed)
    rng = np.random.default_rng(seed)
    out = []
    b = 0.0
    for s in range(grid.n_epochs):
        L = estimate_lipschitz(segment, grid, s,
                               [exact.states[s], exact.states[s + 1], clus.states[s], clus.states[s + 1], clus.candidates[s]],
                               exact.allowed[s], rng)
        b = np.exp(L * grid.length(s)) * b + eps
        E, C = exact.states[s + 1], clus.states[s + 1]
        dist = 0.0
        for start in range(0, len(E), 2048):
            blk = E[start:start + 2048]
            dist = max(dist, float(np.max(np.min(np.max(np.abs(blk[:, None, :] - C[None, :, :]), axis=2), axis=1))))
        out.append(BoundCheck(s + 1, dist, float(b), L))
    return out


def space_fingerprint(allowed) -> tuple:
    return tuple(tuple(int(v) for v in a) for a in allowed)


def build_space(segment, grid, config, allowed=None, kmeans_counts=None) -> StateSpace:
    """Space for the configured clustering mode."""
    if config.clustering == "linf":
        return cluster_states(segment, grid, config.eps, allowed)
    if config.clustering == "kmeans":
        if kmeans_counts is None:
            if config.kmeans_k is not None:
                kmeans_counts = config.kmeans_k
            else:
                ref = cluster_states(segment, grid, config.eps, allowed)
                kmeans_counts = [len(c.eta) for c in ref.clusters]
        return kmeans_cluster(segment, grid, kmeans_counts, config.seed, allowed)
    return forward_enumerate(segment, grid, allowed, config.enum_cap)


def cluster_report(space: StateSpace) -> list:
    """Rows of (level, clusters, candidates, max diameter) for diagnostics."""
    rows = []
    for s, st in enumerate(space.clusters):
        rows.append((s + 1, len(st.eta), int(st.eta.sum()), float(st.diameters.max()) if st.eta.size else 0.0))
    return rows
