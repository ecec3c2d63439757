"""Evaluation metrics, clustering and the per-iteration metric trace."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .linalg import orthonormalize, rng_stream

DEFAULT_ANGLE = math.pi / 8
DEGENERATE_GAP = 1e-6


def angular_error(u, v) -> float:
    """Sign-invariant angle between two directions, in [0, pi/2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("angular error is undefined for a zero vector")
    c = abs(float(np.dot(u, v))) / (nu * nv)
    return math.acos(min(max(c, 0.0), 1.0))


def longest_streak(V_hat, V_true, threshold: float = DEFAULT_ANGLE) -> int:
    """Number of leading columns of ``V_hat`` within ``threshold`` of ``V_true``, in order."""
    V_hat = np.asarray(V_hat, dtype=np.float64)
    V_true = np.asarray(V_true, dtype=np.float64)
    if V_hat.shape != V_true.shape:
        raise ShapeError(f"shape mismatch {V_hat.shape} vs {V_true.shape}")
    for i in range(V_hat.shape[1]):
        if not angular_error(V_hat[:, i], V_true[:, i]) < threshold:
            return i
    return V_hat.shape[1]


def subspace_distance(V_hat, V_true, k: int | None = None) -> float:
    """1 - tr(U* P) / k with U* and P the orthogonal projectors onto both column spans."""
    V_hat = np.asarray(V_hat, dtype=np.float64)
    V_true = np.asarray(V_true, dtype=np.float64)
    k = V_true.shape[1] if k is None else k
    if V_hat.shape[0] != V_true.shape[0] or V_hat.shape[1] != k or V_true.shape[1] != k:
        raise ShapeError(f"need two d x {k} matrices, got {V_hat.shape} and {V_true.shape}")
    if k == 0:
        return 0.0
    A = orthonormalize(V_hat)
    B = orthonormalize(V_true)
    # tr(B Bᵀ A Aᵀ) = ||Bᵀ A||_F²
    return float(min(max(1.0 - np.sum((B.T @ A) ** 2) / k, 0.0), 1.0))


def warn_if_degenerate(eigenvalues, k: int) -> bool:
    lam = np.asarray(eigenvalues)[: k + 1]
    if lam.size > 1 and np.min(np.abs(np.diff(lam))) < DEGENERATE_GAP:
        warnings.warn("near-degenerate eigenvalues among the leading k; per-vector streaks are ill-posed",
                      RuntimeWarning, stacklevel=2)
        return True
    return False


# -- clustering ----------------------------------------------------------------

@dataclass(frozen=True)
class Labeling:
    assignments: np.ndarray
    num_clusters: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", a)
        if a.size and (a.min() < 0 or a.max() >= self.num_clusters):
            raise DomainError("assignments must lie in [0, num_clusters)")

    @classmethod
    def from_labels(cls, labels) -> "Labeling":
        """Relabel arbitrary integer labels onto 0..c-1 (in order of first appearance)."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inverse], len(first))


@dataclass
class KMeansResult:
    labeling: Labeling
    centers: np.ndarray
    wcss: float
    history: list[float] = field(default_factory=list)


def _sq_dists(points, centers):
    return np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)


def _kmeans_pp(points, c, rng):
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, c):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(points, centers, max_iters):
    history = []
    labels = None
    for _ in range(max_iters):
        dist = _sq_dists(points, centers)
        new_labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        centers = centers.copy()
        for j in range(centers.shape[0]):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                # empty cluster: move it onto the point farthest from its center
                far = int(np.argmax(dist[np.arange(len(points)), labels]))
                centers[j] = points[far]
                labels = labels.copy()
                labels[far] = j
    dist = _sq_dists(points, centers)
    labels = np.argmin(dist, axis=1)
    wcss = float(dist[np.arange(len(points)), labels].sum())
    return labels, centers, wcss, history


def kmeans(points, clusters: int, seed: int = 0, max_iters: int = 300, restarts: int = 10) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` runs by WCSS."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= clusters <= n:
        raise ConfigError(f"need 1 <= clusters <= n, got clusters={clusters}, n={n}")
    best = None
    for r in range(restarts):
        rng = rng_stream(seed, 2, r)
        labels, centers, wcss, history = _lloyd(points, _kmeans_pp(points, clusters, rng), max_iters)
        if best is None or wcss < best.wcss:
            best = KMeansResult(Labeling(labels, clusters), centers, wcss, history)
    return best


def _entropy(counts) -> float:
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def v_measure(truth, pred) -> float:
    """Harmonic mean of homogeneity and completeness (natural-log entropies)."""
    t = truth.assignments if isinstance(truth, Labeling) else np.asarray(truth)
    p = pred.assignments if isinstance(pred, Labeling) else np.asarray(pred)
    if t.shape != p.shape:
        raise ShapeError(f"label arrays differ in length: {t.shape} vs {p.shape}")
    if t.size == 0:
        return 1.0
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    table = np.zeros((ti.max() + 1, pi.max() + 1))
    np.add.at(table, (ti, pi), 1.0)
    n = table.sum()

    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    nz = table > 0
    col = np.broadcast_to(table.sum(axis=0), table.shape)
    row = np.broadcast_to(table.sum(axis=1)[:, None], table.shape)
    h_c_given_k = float(-np.sum(table[nz] / n * np.log(table[nz] / col[nz])))
    h_k_given_c = float(-np.sum(table[nz] / n * np.log(table[nz] / row[nz])))

    homogeneity = 1.0 if h_c == 0.0 else 1.0 - h_c_given_k / h_c
    completeness = 1.0 if h_k == 0.0 else 1.0 - h_k_given_c / h_k
    if homogeneity + completeness == 0.0:
        return 0.0
    return 2.0 * homogeneity * completeness / (homogeneity + completeness)


# -- trace ---------------------------------------------------------------------

@dataclass(frozen=True)
class MetricRow:
    iteration: int
    wall_ms: float
    streak: int | None
    subspace_distance: float
    utilities: tuple[float, ...]
    skipped_players: int = 0


@dataclass
class MetricTrace:
    k: int
    rows: list[MetricRow] = field(default_factory=list)

    def append(self, row: MetricRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, idx) -> MetricRow:
        return self.rows[idx]

    @property
    def header(self) -> list[str]:
        return (["iteration", "wall_ms", "streak", "subspace_distance"]
                + [f"u_{i + 1}" for i in range(self.k)] + ["skipped_players"])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            streak = "nan" if r.streak is None else r.streak
            w.writerow([r.iteration, f"{r.wall_ms:.3f}", streak, repr(float(r.subspace_distance)),
                        *(repr(float(u)) for u in r.utilities), r.skipped_players])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as f:
                f.write(text)
        return text
