"""Per-player update directions and utilities.

Players are indexed from 0: player ``i`` owns column ``i`` of the state and its
parents are columns ``0..i-1``. Every function accepts a :class:`CovView`, which
is either an explicit covariance ``Σ`` or a minibatch ``X_t`` standing for
``Σ_t = X_tᵀX_t / n'``. The batch path only ever forms ``X_t V`` and
``X_tᵀ(X_t V)``; ``Σ_t`` is never materialized.

The ``*_directions`` functions compute all players at once and back the solver;
the single-player functions are the reference definitions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, SingularPenaltyError
from .linalg import jacobi_eigh

DENOM_TOL = 1e-12


class UpdateRule(str, enum.Enum):
    MU = "mu"
    ALPHA = "alpha"
    GHA = "gha"
    MU_GRAD = "mu_grad"

    @classmethod
    def parse(cls, value) -> "UpdateRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).replace("-", "_").lower())
        except ValueError:
            raise ConfigError(f"unknown update rule {value!r}") from None


class Constraint(str, enum.Enum):
    UNIT_SPHERE = "unit_sphere"
    UNIT_BALL = "unit_ball"


@dataclass(frozen=True)
class EigenState:
    """Candidate eigenvectors on the columns of a ``d x k`` matrix."""

    vectors: np.ndarray
    constraint: Constraint = Constraint.UNIT_SPHERE

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=np.float64)
        if V.ndim != 2:
            raise ShapeError(f"state vectors must be d x k, got shape {V.shape}")
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "constraint", Constraint(self.constraint))
        self.check()

    @property
    def d(self) -> int:
        return self.vectors.shape[0]

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    def check(self, tol: float = 1e-8) -> None:
        norms = np.linalg.norm(self.vectors, axis=0)
        if self.constraint is Constraint.UNIT_SPHERE:
            bad = np.abs(norms - 1.0) > tol
        else:
            bad = norms > 1.0 + tol
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise DomainError(f"column {j} violates {self.constraint.value} (norm {norms[j]:.6g})")


@dataclass(frozen=True)
class CovView:
    """Either an explicit symmetric ``sigma`` or a minibatch ``batch`` (rows are samples)."""

    sigma: np.ndarray | None = None
    batch: np.ndarray | None = None

    def __post_init__(self):
        if (self.sigma is None) == (self.batch is None):
            raise ConfigError("CovView needs exactly one of sigma or batch")
        if self.sigma is not None:
            S = np.asarray(self.sigma, dtype=np.float64)
            if S.ndim != 2 or S.shape[0] != S.shape[1]:
                raise ShapeError(f"sigma must be square, got {S.shape}")
            if np.linalg.norm(S - S.T) > 1e-8 * np.linalg.norm(S):
                raise ShapeError("sigma is not symmetric")
            object.__setattr__(self, "sigma", S)
        else:
            X = np.asarray(self.batch, dtype=np.float64)
            if X.ndim != 2 or X.shape[0] == 0:
                raise ShapeError(f"batch must be a non-empty n x d matrix, got {X.shape}")
            object.__setattr__(self, "batch", X)

    @classmethod
    def of(cls, cov) -> "CovView":
        return cov if isinstance(cov, CovView) else cls(sigma=cov)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0] if self.sigma is not None else self.batch.shape[1]

    @property
    def n(self) -> int | None:
        return None if self.batch is None else self.batch.shape[0]

    def products(self, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(ΣV, VᵀΣV)`` for the columns of ``V``."""
        if V.shape[0] != self.dim:
            raise ShapeError(f"vectors have dimension {V.shape[0]}, covariance has {self.dim}")
        if self.sigma is not None:
            SV = self.sigma @ V
            return SV, V.T @ SV
        XV = self.batch @ V
        n = self.batch.shape[0]
        return self.batch.T @ XV / n, XV.T @ XV / n


def _player(state: EigenState, i: int) -> int:
    if not 0 <= i < state.k:
        raise IndexError(f"player {i} out of range for k={state.k}")
    return i


def _prefix(cov, state: EigenState, i: int):
    cov = CovView.of(cov)
    i = _player(state, i)
    V = state.vectors[:, : i + 1]
    SV, G = cov.products(V)
    return V, SV, G


def mu_update(cov, state: EigenState, i: int) -> np.ndarray:
    """Unbiased direction Σv_i − Σ_{j<i} (v_iᵀΣv_j) v_j."""
    V, SV, G = _prefix(cov, state, i)
    return SV[:, i] - V[:, :i] @ G[:i, i]


def alpha_update(cov, state: EigenState, i: int) -> np.ndarray:
    """Ratio-penalty direction Σv_i − Σ_{j<i} (v_iᵀΣv_j / v_jᵀΣv_j) Σv_j.

    On a batch the same ``Σ_t`` enters numerator, denominator and direction,
    which is what makes the minibatch estimate biased.
    """
    V, SV, G = _prefix(cov, state, i)
    denom = np.diag(G)[:i]
    small = np.flatnonzero(np.abs(denom) < DENOM_TOL)
    if small.size:
        j = int(small[0])
        raise SingularPenaltyError(f"penalty denominator for parent {j} is {denom[j]:.3e}", parent=j)
    return SV[:, i] - SV[:, :i] @ (G[:i, i] / denom)


def gha_update(cov, state: EigenState, i: int) -> np.ndarray:
    """Hebbian direction Σv_i − Σ_{j≤i} (v_iᵀΣv_j) v_j (self-term included)."""
    V, SV, G = _prefix(cov, state, i)
    return SV[:, i] - V @ G[:, i]


def mu_grad_update(cov, state: EigenState, i: int) -> np.ndarray:
    """True gradient of the deflated quadratic form vᵀ[I − Σ_{j<i} v_jv_jᵀ]Σv."""
    V, SV, G = _prefix(cov, state, i)
    overlap = V[:, :i].T @ V[:, i]
    return SV[:, i] - 0.5 * (V[:, :i] @ G[:i, i] + SV[:, :i] @ overlap)


def alpha_utility(cov, state: EigenState, i: int) -> float:
    V, SV, G = _prefix(cov, state, i)
    denom = np.diag(G)[:i]
    small = np.flatnonzero(np.abs(denom) < DENOM_TOL)
    if small.size:
        j = int(small[0])
        raise SingularPenaltyError(f"penalty denominator for parent {j} is {denom[j]:.3e}", parent=j)
    return float(G[i, i] - np.sum(G[:i, i] ** 2 / denom))


def mu_utility(cov, state: EigenState, i: int) -> float:
    """Deflated Rayleigh value v_iᵀ[I − Σ_{j<i} v_jv_jᵀ]Σv_i (= ⟨v_i, Δ^μ_i⟩)."""
    V, SV, G = _prefix(cov, state, i)
    return float(G[i, i] - V[:, :i].T @ V[:, i] @ G[:i, i])


_SINGLE = {
    UpdateRule.MU: mu_update,
    UpdateRule.ALPHA: alpha_update,
    UpdateRule.GHA: gha_update,
    UpdateRule.MU_GRAD: mu_grad_update,
}


def update(rule, cov, state: EigenState, i: int) -> np.ndarray:
    return _SINGLE[UpdateRule.parse(rule)](cov, state, i)


def directions(rule, cov, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All players' directions at once.

    Returns ``(D, ok)`` where column ``i`` of ``D`` is player ``i``'s direction
    and ``ok[i]`` is False when an alpha-rule denominator vanished for one of
    its parents (the column is then zero and must not be applied).
    """
    rule = UpdateRule.parse(rule)
    cov = CovView.of(cov)
    SV, G = cov.products(V)
    k = V.shape[1]
    ok = np.ones(k, dtype=bool)
    upper = np.triu(G, 1)
    if rule is UpdateRule.MU:
        D = SV - V @ upper
    elif rule is UpdateRule.GHA:
        D = SV - V @ np.triu(G)
    elif rule is UpdateRule.MU_GRAD:
        overlap = np.triu(V.T @ V, 1)
        D = SV - 0.5 * (V @ upper + SV @ overlap)
    else:
        denom = np.diag(G).copy()
        singular = np.abs(denom) < DENOM_TOL
        if np.any(singular):
            first = int(np.flatnonzero(singular)[0])
            ok[first + 1:] = False
            denom[singular] = 1.0
        D = SV - SV @ (upper / denom[:, None])
        D[:, ~ok] = 0.0
    return D, ok


def utilities(rule, cov, V: np.ndarray) -> np.ndarray:
    """Per-player utility matching ``rule`` (alpha utility for alpha, deflated Rayleigh otherwise).

    Alpha utilities whose denominators vanish are reported as NaN.
    """
    rule = UpdateRule.parse(rule)
    cov = CovView.of(cov)
    _, G = cov.products(V)
    upper = np.triu(G, 1)
    diag = np.diag(G)
    if rule is UpdateRule.ALPHA:
        denom = diag.copy()
        singular = np.abs(denom) < DENOM_TOL
        denom[singular] = np.nan
        return diag - np.sum(upper**2 / denom[:, None], axis=0, where=np.triu(np.ones_like(G, bool), 1))
    overlap = np.triu(V.T @ V, 1)
    return diag - np.sum(overlap * upper, axis=0)


def mu_best_response(sigma, parents) -> np.ndarray:
    """Unit maximizer of vᵀ[I − Σ_j p_jp_jᵀ]Σv with the parents ``p_j`` (columns) held fixed.

    Only the symmetric part of the deflated matrix matters for the quadratic
    form, so this is its top oracle eigenvector.
    """
    S = CovView(sigma=sigma).sigma
    P = np.asarray(parents, dtype=np.float64).reshape(S.shape[0], -1)
    M = S - P @ (P.T @ S)
    return jacobi_eigh(0.5 * (M + M.T)).eigenvectors[:, 0]
