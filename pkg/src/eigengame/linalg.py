"""Dense linear-algebra primitives, sphere operators and the Jacobi eigensolver.

Vectors are 1-d ``float64`` arrays and matrices are 2-d arrays. Candidate
eigenvectors are always stored on the *columns* of a ``d x k`` matrix.

Random streams
--------------
Every random draw in the package goes through :func:`rng_stream`, a Philox
(counter-based) generator keyed by ``(seed, *stream_key)`` through
``numpy.random.SeedSequence``. Distinct stream keys give statistically
independent streams from one user seed, so e.g. initialization and data
sampling never share state. Streams used:

    (seed,)          random_orthogonal
    (seed, 0)        solver initial vectors
    (seed, 1)        minibatch / edge sampling
    (seed, 2, r)     k-means restart ``r``
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DegenerateStepError, DomainError, RankError, ShapeError

UNIT_TOL = 1e-8
ORACLE_MAX_DIM = 4096


def rng_stream(seed: int, *stream_key: int) -> np.random.Generator:
    if seed < 0:
        raise DomainError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(stream_key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SymEig:
    """Eigenvalues in descending order with matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def top(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, :k]

    def bottom(self, k: int) -> np.ndarray:
        """The ``k`` eigenvectors with the smallest eigenvalues, ascending."""
        if k == 0:
            return self.eigenvectors[:, :0]
        return self.eigenvectors[:, ::-1][:, :k]


def _as_square_symmetric(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {S.shape}")
    if S.shape[0] == 0:
        raise ShapeError("empty matrix")
    if not np.all(np.isfinite(S)):
        raise DomainError("matrix has non-finite entries")
    scale = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > 1e-8 * scale:
        raise ShapeError("matrix is not symmetric (relative asymmetry > 1e-8)")
    return 0.5 * (S + S.T)


@lru_cache(maxsize=64)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Pairings of a round-robin tournament on ``n`` indices.

    Each round is a set of disjoint (p, q) pairs and every pair p < q appears
    exactly once over the ``n - 1`` (or ``n``) rounds, so one pass over the
    rounds is a full cyclic Jacobi sweep whose rotations within a round commute.
    """
    m = n + (n % 2)
    ring = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = ring[i], ring[m - 1 - i]
            if a >= n or b >= n:
                continue
            ps.append(min(a, b))
            qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        ring = [ring[0], ring[-1], *ring[1:-1]]
    return tuple(rounds)


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def jacobi_eigh(S, max_sweeps: int = 100, tol: float = 1e-12) -> SymEig:
    """Eigendecomposition of a dense symmetric matrix by cyclic Jacobi rotations.

    Sweeps visit every off-diagonal pair once, in round-robin order so that each
    round applies ``d/2`` disjoint rotations at once. Iteration stops when the
    off-diagonal Frobenius norm drops to ``tol * ||S||_F``.

    Eigenvalues are returned in descending order (stable on ties) and each
    eigenvector is signed so its largest-magnitude entry is positive.
    """
    A = _as_square_symmetric(S).copy()
    d = A.shape[0]
    if d > ORACLE_MAX_DIM:
        raise ShapeError(f"oracle is limited to d <= {ORACLE_MAX_DIM}, got {d}")
    V = np.eye(d)
    target = tol * np.linalg.norm(A)
    rounds = _round_robin(d) if d > 1 else ()

    def off_norm(M):
        return np.linalg.norm(M - np.diag(np.diag(M)))

    sweeps = 0
    while off_norm(A) > target:
        if sweeps >= max_sweeps:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not np.any(active):
                continue
            app, aqq = A[P, P], A[Q, Q]
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = (aqq - app) / (2.0 * apq)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            colp, colq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * colp - s * colq
            A[:, Q] = s * colp + c * colq
            rowp, rowq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rowp - s[:, None] * rowq
            A[Q, :] = s[:, None] * rowp + c[:, None] * rowq
            A[P, Q] = 0.0
            A[Q, P] = 0.0

            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return SymEig(eigenvalues=w[order], eigenvectors=_fix_signs(V[:, order]))


def _check_unit(v: np.ndarray, name: str = "v") -> None:
    n = np.linalg.norm(v)
    if abs(n - 1.0) > UNIT_TOL:
        raise DomainError(f"{name} must have unit norm, got {n:.3e}")


def tangent_project(v, y) -> np.ndarray:
    """Project ``y`` onto the tangent space of the unit sphere at ``v``."""
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if v.shape != y.shape:
        raise ShapeError(f"shape mismatch {v.shape} vs {y.shape}")
    _check_unit(v)
    return y - np.dot(y, v) * v


def retract(v, z) -> np.ndarray:
    """Step from ``v`` by ``z`` and map back to the sphere: (v + z) / ||v + z||."""
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if v.shape != z.shape:
        raise ShapeError(f"shape mismatch {v.shape} vs {z.shape}")
    _check_unit(v)
    w = v + z
    n = np.linalg.norm(w)
    if not n >= 1e-300:
        raise DegenerateStepError("retraction of a vanishing vector")
    return w / n


def orthonormalize(V, rank_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis for the column span of ``V`` (Gram-Schmidt, two passes)."""
    V = np.array(V, dtype=np.float64, ndmin=2)
    if V.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {V.shape}")
    d, k = V.shape
    Q = np.zeros((d, k))
    rank = 0
    deficient = False
    for i in range(k):
        col = V[:, i].copy()
        ref = np.linalg.norm(col)
        for _ in range(2):
            col -= Q[:, :rank] @ (Q[:, :rank].T @ col)
        n = np.linalg.norm(col)
        if ref == 0.0 or n <= rank_tol * ref:
            deficient = True
            continue
        Q[:, rank] = col / n
        rank += 1
    if deficient:
        raise RankError(f"columns are rank deficient (numerical rank {rank} of {k})", rank)
    return Q


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Seeded Haar-distributed orthogonal matrix (QR with sign-fixed R diagonal)."""
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    G = rng_stream(seed).standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs
