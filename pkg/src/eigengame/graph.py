"""Bottom-k Laplacian eigenvectors from a stream of edges.

The Laplacian ``L = XᵀX`` is never formed: ``X`` is the edge-by-node incidence
matrix (``+1`` at the out node, ``-1`` at the in node), applied by gathering
and transposed by scatter-add. Players run the unbiased update on the shifted
matrix ``λ*I − L``, whose top eigenvectors are the bottom eigenvectors of
``L``. An extra leading player (index 0) tracks the top eigenvector of ``L``
itself so that ``λ*`` can follow an estimate of ``λ₁``.

Edge minibatches are drawn uniformly with replacement and every per-batch
Laplacian product is scaled by ``|E| / batch`` so it is unbiased for ``L``.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import SymEig, rng_stream
from .metrics import MetricRow, MetricTrace, longest_streak, subspace_distance, warn_if_degenerate
from .solver import SolverConfig, _step, aggregate_shards, init_state, step_size, worker_count
from .updates import Constraint, EigenState

FIXED_2V = "fixed_2v"
TRACKED = "tracked"


@dataclass(frozen=True)
class EdgeList:
    edges: np.ndarray
    num_nodes: int

    def __post_init__(self):
        E = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", E)
        if E.size:
            if E.min() < 0 or E.max() >= self.num_nodes:
                raise IndexError(f"node ids must lie in [0, {self.num_nodes})")
            if np.any(E[:, 0] == E[:, 1]):
                raise ConfigError("self-loops are not allowed")

    def __len__(self) -> int:
        return self.edges.shape[0]

    def subset(self, idx) -> "EdgeList":
        return EdgeList(self.edges[idx], self.num_nodes)


class LambdaTracker:
    """Holds the shift ``λ*``, which must dominate the estimates of ``λ₁``.

    ``fixed_2v`` keeps ``2|V|`` unless an estimate ever exceeds it.
    ``tracked`` replaces the initial bound by the first estimate and then keeps
    the running maximum of estimates.
    """

    def __init__(self, num_nodes: int, mode: str = FIXED_2V):
        mode = {"fixed2v": FIXED_2V}.get(mode, mode)
        if mode not in (FIXED_2V, TRACKED):
            raise ConfigError(f"unknown lambda-star mode {mode!r}")
        self.mode = mode
        self.lambda_star = 2.0 * num_nodes
        self.last_estimate = None

    def observe(self, estimate: float) -> float:
        estimate = float(estimate)
        if self.mode == TRACKED and self.last_estimate is None:
            self.lambda_star = estimate
        else:
            self.lambda_star = max(self.lambda_star, estimate)
        self.last_estimate = estimate
        return self.lambda_star


def incidence_apply(edges: EdgeList, v) -> np.ndarray:
    """``Xv``: one entry per edge, ``v[out] - v[in]``. ``v`` may have several columns."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != edges.num_nodes:
        raise ShapeError(f"vector has length {v.shape[0]}, graph has {edges.num_nodes} nodes")
    return v[edges.edges[:, 0]] - v[edges.edges[:, 1]]


def incidence_t_apply(edges: EdgeList, w) -> np.ndarray:
    """``Xᵀw``: scatter-add ``+w_e`` at out(e) and ``-w_e`` at in(e)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != len(edges):
        raise ShapeError(f"expected {len(edges)} edge values, got {w.shape[0]}")
    out = np.zeros((edges.num_nodes,) + w.shape[1:])
    np.add.at(out, edges.edges[:, 0], w)
    np.add.at(out, edges.edges[:, 1], -w)
    return out


def laplacian(edges: EdgeList) -> np.ndarray:
    """Dense unnormalized Laplacian (desk-scale only)."""
    n = edges.num_nodes
    L = np.zeros((n, n))
    out, inn = edges.edges[:, 0], edges.edges[:, 1]
    np.add.at(L, (out, out), 1.0)
    np.add.at(L, (inn, inn), 1.0)
    np.add.at(L, (out, inn), -1.0)
    np.add.at(L, (inn, out), -1.0)
    return L


def _shard_products(edges: EdgeList, V: np.ndarray, scale: float):
    XV = incidence_apply(edges, V)
    LV = scale * incidence_t_apply(edges, XV)
    G = scale * (XV.T @ XV)
    return LV, G


def _directions(V, LV, G, lambda_star):
    """Shifted-Laplacian directions for every player (column 0 is the λ₁ tracker).

    Player i > 0 uses parents 1..i-1:
        λ*[v_i − Σ_j (v_iᵀv_j) v_j] − [Lv_i − Σ_j (v_jᵀLv_i) v_j]
    """
    D = np.empty_like(V)
    D[:, 0] = LV[:, 0]
    W, LW, GW = V[:, 1:], LV[:, 1:], G[1:, 1:]
    overlap = np.triu(W.T @ W, 1)
    D[:, 1:] = lambda_star * (W - W @ overlap) - (LW - W @ np.triu(GW, 1))
    return D


def graph_update(edges: EdgeList, state: EigenState, i: int, tracker: LambdaTracker,
                 scale: float = 1.0) -> np.ndarray:
    """Direction for player ``i`` (0 = λ₁ tracker) on one edge batch.

    ``scale`` multiplies every Laplacian product (``|E|/batch`` for sampled
    batches). Player 0 also feeds its Rayleigh estimate ``‖Xv₀‖²`` to the tracker.
    """
    if tracker.lambda_star <= 0:
        raise ConfigError("lambda_star must be positive")
    if not 0 <= i < state.k:
        raise IndexError(f"player {i} out of range for {state.k} vectors")
    V = state.vectors[:, : i + 1]
    LV, G = _shard_products(edges, V, scale)
    if i == 0:
        v0 = V[:, 0]
        tracker.observe(G[0, 0] / float(v0 @ v0))
    return _directions(V, LV, G, tracker.lambda_star)[:, i]


def _sample_edges(edges: EdgeList, config: SolverConfig, rng):
    if config.batch_size is None:
        return edges
    return edges.subset(rng.integers(0, len(edges), size=config.batch_size))


def run_graph(config: SolverConfig, edges: EdgeList, ground_truth: SymEig | None = None,
              lambda_star: str = FIXED_2V) -> tuple[np.ndarray, MetricTrace]:
    """Learn the bottom ``config.k`` Laplacian eigenvectors, returned ascending as columns.

    ``ground_truth`` is the eigendecomposition of ``L`` (descending, as from
    the oracle); metrics compare against its last ``k`` columns reversed.
    ``config.batch_size`` counts edges per step (None: every edge, unscaled).
    """
    n = edges.num_nodes
    k = config.k
    if k == 0:
        return np.zeros((n, 0)), MetricTrace(0)
    if len(edges) == 0:
        raise ConfigError("edge list is empty")
    if k > n - 1:
        raise ConfigError(f"k={k} must be at most |V|-1={n - 1}")
    if config.batch_size is None and len(edges) % config.shards:
        raise ConfigError(f"shards={config.shards} must divide the edge count {len(edges)}")

    V = init_state(n, k + 1, config.seed, Constraint.UNIT_SPHERE).vectors.copy()
    buf = np.zeros_like(V)
    tracker = LambdaTracker(n, lambda_star)
    sphere_cfg = replace(config, rule="mu")

    V_true = None
    if ground_truth is not None:
        V_true = ground_truth.bottom(k)
        warn_if_degenerate(ground_truth.eigenvalues[::-1], k)

    rng = rng_stream(config.seed, 1)
    workers = worker_count(config.shards)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    mapper = pool.map if pool is not None else map
    trace = MetricTrace(k)
    start = time.perf_counter()
    try:
        for t in range(1, config.steps + 1):
            batch = _sample_edges(edges, config, rng)
            shards = [batch.subset(idx) for idx in np.array_split(np.arange(len(batch)), config.shards)]
            sizes = [len(s) for s in shards]
            snapshot = V
            products = list(mapper(lambda s: _shard_products(s, snapshot, len(edges) / len(s)), shards))

            # λ₁ estimate from the tracker player first, so every shard shares one λ*
            G0 = aggregate_shards([G[0, 0] for _, G in products], sizes)
            tracker.observe(float(G0) / float(snapshot[:, 0] @ snapshot[:, 0]))
            D = aggregate_shards([_directions(snapshot, LV, G, tracker.lambda_star) for LV, G in products], sizes)
            V, buf = _step(snapshot, D, step_size(config.schedule, t), buf, sphere_cfg, Constraint.UNIT_SPHERE)

            if t % config.eval_every == 0 or t == config.steps:
                LV, G = _shard_products(batch, V, len(edges) / len(batch))
                utils = np.sum(V * _directions(V, LV, G, tracker.lambda_star), axis=0)[1:]
                if V_true is not None:
                    streak = longest_streak(V[:, 1:], V_true, config.angle_threshold)
                    dist = subspace_distance(V[:, 1:], V_true, k)
                else:
                    streak, dist = None, float("nan")
                trace.append(MetricRow(t, (time.perf_counter() - start) * 1e3, streak, dist,
                                       tuple(float(u) for u in utils), 0))
    finally:
        if pool is not None:
            pool.shutdown()
    return V[:, 1:].copy(), trace
