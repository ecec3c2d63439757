"""Simultaneous-update training loop with simulated data-parallel shards.

Each iteration draws one minibatch of ``batch_size`` rows, splits it into
``shards`` contiguous blocks, computes every player's direction on every block
from a snapshot of the current vectors, reduces the blocks with a size-weighted
mean in shard order and applies one optimizer step per player.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data_io import Dataset, sample_batch
from .errors import ConfigError, DegenerateStepError, RankError, ShapeError
from .linalg import SymEig, rng_stream, tangent_project
from .metrics import DEFAULT_ANGLE, MetricRow, MetricTrace, longest_streak, subspace_distance, warn_if_degenerate
from .updates import Constraint, CovView, EigenState, UpdateRule, directions, utilities

log = logging.getLogger(__name__)

THREADS_ENV = "EIGENGAME_THREADS"


@dataclass(frozen=True)
class Schedule:
    """``constant``: lr at every step. ``inverse_t``: lr / t."""

    kind: str = "constant"
    lr: float = 0.1

    def __post_init__(self):
        kind = {"inv-t": "inverse_t", "inv_t": "inverse_t"}.get(self.kind, self.kind)
        if kind not in ("constant", "inverse_t"):
            raise ConfigError(f"unknown schedule {self.kind!r}")
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ConfigError(f"learning rate must be finite and >= 0, got {self.lr}")
        object.__setattr__(self, "kind", kind)


def step_size(schedule: Schedule, t: int) -> float:
    if t < 1:
        raise ConfigError(f"iterations are numbered from 1, got {t}")
    if schedule.kind == "constant":
        return schedule.lr
    return schedule.lr / t


@dataclass(frozen=True)
class SolverConfig:
    k: int
    rule: UpdateRule = UpdateRule.MU
    steps: int = 1000
    batch_size: int | None = None  # None: the whole dataset every step
    shards: int = 1
    schedule: Schedule = field(default_factory=Schedule)
    momentum: float = 0.0
    nesterov: bool = False
    riemannian_projection: bool = False
    seed: int = 0
    eval_every: int = 100
    angle_threshold: float = DEFAULT_ANGLE

    def __post_init__(self):
        object.__setattr__(self, "rule", UpdateRule.parse(self.rule))
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.shards < 1:
            raise ConfigError(f"shards must be >= 1, got {self.shards}")
        if self.batch_size is not None:
            if self.batch_size < 1:
                raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
            if self.batch_size % self.shards:
                raise ConfigError(f"shards={self.shards} must divide batch size {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")

    @property
    def constraint(self) -> Constraint:
        return Constraint.UNIT_BALL if self.rule is UpdateRule.GHA else Constraint.UNIT_SPHERE

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rule"] = self.rule.value
        return out


# Settings used for the large-scale run; not defaults since other experiments don't state them.
PROFILES = {
    "default": {},
    "meena": {"momentum": 0.9, "nesterov": True, "schedule": Schedule("constant", 5e-5)},
}


def with_profile(config: SolverConfig, name: str) -> SolverConfig:
    try:
        return replace(config, **PROFILES[name])
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}") from None


def init_state(d: int, k: int, seed: int, constraint=Constraint.UNIT_SPHERE) -> EigenState:
    """Seeded standard-normal columns, each scaled to unit norm."""
    if k > d:
        raise ConfigError(f"k={k} exceeds dimension d={d}")
    V = rng_stream(seed, 0).standard_normal((d, k))
    return EigenState(V / np.linalg.norm(V, axis=0), constraint)


def aggregate_shards(per_shard, shard_sizes) -> np.ndarray:
    """Size-weighted mean of per-shard directions, summed left to right."""
    per_shard = [np.asarray(g, dtype=np.float64) for g in per_shard]
    if not per_shard or len(per_shard) != len(shard_sizes):
        raise ShapeError("need one size per shard and at least one shard")
    shape = per_shard[0].shape
    if any(g.shape != shape for g in per_shard):
        raise ShapeError("shard directions differ in shape")
    if any(s <= 0 for s in shard_sizes):
        raise ConfigError("shard sizes must be positive")
    total = float(sum(shard_sizes))
    out = np.zeros(shape)
    for g, s in zip(per_shard, shard_sizes):
        out += (s / total) * g
    return out


def _step(V, D, lr, buf, config, constraint):
    """Optimizer step on all columns of ``V`` at once; returns (V', buf')."""
    if config.riemannian_projection:
        D = D - V * np.sum(D * V, axis=0)
    if config.momentum > 0.0:
        buf = D + config.momentum * buf
        upd = D + config.momentum * buf if config.nesterov else buf
    else:
        upd = D
    W = V + lr * upd
    norms = np.linalg.norm(W, axis=0)
    if constraint is Constraint.UNIT_BALL:
        return W / np.maximum(norms, 1.0), buf
    if np.any(~(norms >= 1e-300)):
        raise DegenerateStepError("retraction of a vanishing vector")
    return W / norms, buf


def apply_update(v, direction, lr: float, buf, config: SolverConfig):
    """One player's step: optional tangent projection, momentum, then renormalize.

    Returns ``(v_new, buf_new)``. On the unit ball (GHA) the result is only
    scaled back when it leaves the ball.
    """
    v = np.asarray(v, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    buf = np.zeros_like(v) if buf is None else np.asarray(buf, dtype=np.float64)
    if config.riemannian_projection:
        direction = tangent_project(v, direction)
        config = replace(config, riemannian_projection=False)
    V, B = _step(v[:, None], direction[:, None], lr, buf[:, None], config, config.constraint)
    return V[:, 0], B[:, 0]


def worker_count(shards: int) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(shards, cap))


def _batch_plan(config: SolverConfig, source):
    if isinstance(source, Dataset):
        if source.rows is None and config.batch_size is None:
            raise ConfigError("a generator dataset needs an explicit batch size")
        if config.batch_size is None and source.n % config.shards:
            raise ConfigError(f"shards={config.shards} must divide the dataset size {source.n}")
        return source, source.d
    S = np.asarray(source, dtype=np.float64)
    if config.shards != 1:
        raise ConfigError("an explicit covariance cannot be sharded; use a row dataset")
    return CovView(sigma=S), S.shape[0]


def run(config: SolverConfig, source, ground_truth: SymEig | None = None,
        init: EigenState | None = None) -> tuple[EigenState, MetricTrace]:
    """Train ``config.k`` players on ``source`` (a :class:`Dataset` or an explicit covariance)."""
    source, d = _batch_plan(config, source)
    k = config.k
    constraint = config.constraint
    state = init if init is not None else init_state(d, k, config.seed, constraint)
    if state.d != d or state.k != k:
        raise ShapeError(f"initial state is {state.d}x{state.k}, expected {d}x{k}")
    V = state.vectors.copy()
    buf = np.zeros_like(V)

    V_true = None
    if ground_truth is not None:
        if ground_truth.dim != d:
            raise ShapeError(f"ground truth has dimension {ground_truth.dim}, data has {d}")
        V_true = ground_truth.top(k)
        warn_if_degenerate(ground_truth.eigenvalues, k)

    data_rng = rng_stream(config.seed, 1)
    workers = worker_count(config.shards)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    trace = MetricTrace(k)
    skipped = 0
    start = time.perf_counter()
    try:
        for t in range(1, config.steps + 1):
            if isinstance(source, CovView):
                full = source
                covs, sizes = [source], [1]
            else:
                if config.batch_size is None:
                    X = source.rows
                else:
                    X = sample_batch(source, config.batch_size, data_rng, step=t - 1)
                full = CovView(batch=X)
                blocks = np.split(X, config.shards)
                covs, sizes = [CovView(batch=b) for b in blocks], [b.shape[0] for b in blocks]

            snapshot = V
            if pool is not None:
                results = list(pool.map(lambda c: directions(config.rule, c, snapshot), covs))
            else:
                results = [directions(config.rule, c, snapshot) for c in covs]
            D = aggregate_shards([r[0] for r in results], sizes)
            ok = np.logical_and.reduce([r[1] for r in results])
            if not ok.all():
                skipped += int(np.count_nonzero(~ok))
                log.debug("iteration %d: skipped players %s (singular penalty)", t, np.flatnonzero(~ok))

            V_new, buf_new = _step(snapshot, D, step_size(config.schedule, t), buf, config, constraint)
            V = np.where(ok, V_new, snapshot)
            buf = np.where(ok, buf_new, buf)

            if t % config.eval_every == 0 or t == config.steps:
                trace.append(_row(t, start, V, V_true, config, full, skipped))
                skipped = 0
    finally:
        if pool is not None:
            pool.shutdown()
    return EigenState(V, constraint), trace


def _row(t, start, V, V_true, config, cov, skipped) -> MetricRow:
    if V_true is not None and config.k > 0:
        streak = longest_streak(V, V_true, config.angle_threshold)
        try:
            dist = subspace_distance(V, V_true, config.k)
        except RankError:
            dist = float("nan")
    else:
        streak, dist = None, float("nan")
    with np.errstate(all="ignore"):
        utils = tuple(float(u) for u in utilities(config.rule, cov, V))
    return MetricRow(t, (time.perf_counter() - start) * 1e3, streak, dist, utils, skipped)
