"""Shared fixtures-by-function for the test modules."""
import numpy as np

from eigengame.linalg import random_orthogonal, rng_stream


def random_psd(rng, d, rank=None):
    """Wishart-like PSD matrix, full rank unless ``rank`` is given."""
    A = rng.standard_normal((d, rank or d + 2))
    S = A @ A.T / A.shape[1]
    return 0.5 * (S + S.T)


def spectrum_matrix(lam, seed):
    """QΛQᵀ for a seeded random rotation; returns (S, Q)."""
    lam = np.asarray(lam, dtype=np.float64)
    Q = random_orthogonal(len(lam), seed)
    S = (Q * lam) @ Q.T
    return 0.5 * (S + S.T), Q


def random_unit_columns(rng, d, k):
    V = rng.standard_normal((d, k))
    return V / np.linalg.norm(V, axis=0)


def two_triangles():
    from eigengame import EdgeList

    return EdgeList([(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], 6)


__all__ = ["random_psd", "spectrum_matrix", "random_unit_columns", "two_triangles", "rng_stream"]
