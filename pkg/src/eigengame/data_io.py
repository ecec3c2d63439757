"""Synthetic spectra, minibatch sampling and on-disk formats.

Matrix files
    ``*.csv``  one row per line, comma separated, no header; written with 17
               significant digits so values round-trip.
    other      binary: ``b"EGM1"``, rows and cols as little-endian uint64,
               then rows*cols little-endian float64 values in row-major order.

Edge files
    One ``out in`` pair of non-negative integers per line. Lines starting with
    ``#`` are comments, except a ``# nodes=N`` directive appearing before the
    first edge, which fixes the node count (default: 1 + largest id).
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .linalg import SymEig, _fix_signs, jacobi_eigh, random_orthogonal

MAGIC = b"EGM1"
_HEADER = struct.Struct("<4sQQ")


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalue profile: ``exponential`` (lambda1 * ratio**i) or ``linear`` (lambda1 down to lambda_d)."""

    kind: str
    d: int = 50
    lambda1: float = 1.0
    ratio: float = 0.9
    lambda_d: float | None = None

    def values(self) -> np.ndarray:
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if not self.lambda1 > 0:
            raise ConfigError("lambda1 must be positive")
        if self.kind in ("exponential", "exp"):
            if not 0 < self.ratio < 1:
                raise ConfigError(f"ratio must lie in (0, 1), got {self.ratio}")
            lam = self.lambda1 * self.ratio ** np.arange(self.d)
        elif self.kind == "linear":
            lam_d = self.lambda1 / self.d if self.lambda_d is None else self.lambda_d
            if self.d > 1 and not 0 < lam_d < self.lambda1:
                raise ConfigError(f"need 0 < lambda_d < lambda1, got {lam_d} and {self.lambda1}")
            if self.d == 1:
                lam = np.array([self.lambda1])
            else:
                lam = self.lambda1 - np.arange(self.d) * (self.lambda1 - lam_d) / (self.d - 1)
        else:
            raise ConfigError(f"unknown spectrum kind {self.kind!r}")
        if not (np.all(lam > 0) and np.all(np.diff(lam) < 0)):
            raise ConfigError("spectrum must be strictly positive and strictly decreasing")
        return lam


def synth_covariance(spectrum: Spectrum, seed: int, rotation: np.ndarray | None = None):
    """Build ``Σ = QΛQᵀ`` for a random orthogonal ``Q`` (or ``rotation`` if given).

    Returns ``(sigma, truth)`` where ``truth`` holds ``Λ`` and the columns of
    ``Q``, sign-normalized the same way as :func:`~eigengame.linalg.jacobi_eigh`.
    """
    lam = spectrum.values()
    Q = random_orthogonal(spectrum.d, seed) if rotation is None else np.asarray(rotation, dtype=np.float64)
    if Q.shape != (spectrum.d, spectrum.d):
        raise ShapeError(f"rotation must be {spectrum.d}x{spectrum.d}")
    S = (Q * lam) @ Q.T
    S = 0.5 * (S + S.T)
    return S, SymEig(eigenvalues=lam.copy(), eigenvectors=_fix_signs(Q.copy()))


def sym_sqrt(S) -> np.ndarray:
    eig = jacobi_eigh(S)
    if eig.eigenvalues[-1] < -1e-12 * max(1.0, abs(eig.eigenvalues[0])):
        raise ConfigError("covariance is not positive semidefinite")
    root = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    Q = eig.eigenvectors
    return (Q * root) @ Q.T


@dataclass(frozen=True)
class Dataset:
    """Rows held in memory, or a Gaussian generator with covariance ``sigma``.

    ``sequential=True`` is a deterministic hook: batches are consecutive
    (wrapping) blocks of rows instead of random draws.
    """

    rows: np.ndarray | None = None
    sigma: np.ndarray | None = None
    sequential: bool = False
    _root: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if (self.rows is None) == (self.sigma is None):
            raise ConfigError("Dataset needs exactly one of rows or sigma")
        if self.rows is not None:
            X = np.asarray(self.rows, dtype=np.float64)
            if X.ndim != 2:
                raise ShapeError(f"rows must be n x d, got {X.shape}")
            if X.shape[0] == 0:
                raise ConfigError("empty dataset")
            object.__setattr__(self, "rows", X)
        else:
            S = np.asarray(self.sigma, dtype=np.float64)
            object.__setattr__(self, "sigma", S)
            object.__setattr__(self, "_root", sym_sqrt(S))

    @classmethod
    def gaussian(cls, sigma) -> "Dataset":
        return cls(sigma=sigma)

    @property
    def d(self) -> int:
        return self.rows.shape[1] if self.rows is not None else self.sigma.shape[0]

    @property
    def n(self) -> int | None:
        return None if self.rows is None else self.rows.shape[0]


def sample_batch(ds: Dataset, size: int, rng: np.random.Generator, step: int = 0) -> np.ndarray:
    """Draw an ``size x d`` minibatch.

    Row datasets sample uniformly with replacement; generator datasets draw
    fresh colored Gaussians. In sequential mode the batch is the block of rows
    starting at ``step * size`` (mod n) and ``rng`` is untouched.
    """
    if size < 1:
        raise ConfigError(f"batch size must be >= 1, got {size}")
    if ds.rows is None:
        return rng.standard_normal((size, ds.d)) @ ds._root
    n = ds.rows.shape[0]
    if ds.sequential:
        idx = (step * size + np.arange(size)) % n
    else:
        idx = rng.integers(0, n, size=size)
    return ds.rows[idx]


# -- matrix files --------------------------------------------------------------

def _is_csv(path) -> bool:
    return os.fspath(path).lower().endswith(".csv")


def save_matrix(path, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ShapeError(f"can only save 2-d matrices, got shape {M.shape}")
    if _is_csv(path):
        with open(path, "w", newline="\n") as f:
            for row in M:
                f.write(",".join(format(float(x), ".17g") for x in row) + "\n")
        return
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, M.shape[0], M.shape[1]))
        f.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    if _is_csv(path):
        return _load_csv(path)
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(data)} bytes)", position=len(data))
    magic, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}", position=0)
    need = _HEADER.size + 8 * n * d
    if len(data) != need:
        raise ParseError(f"{path}: expected {need} bytes for {n}x{d}, found {len(data)}",
                         position=min(len(data), need))
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n, d).astype(np.float64)


def _load_csv(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(cell) for cell in line.split(",")]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric cell", position=lineno) from None
            if rows and len(row) != len(rows[0]):
                raise ParseError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(row)}",
                                 position=lineno)
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no rows", position=1)
    return np.array(rows, dtype=np.float64)


# -- edges and labels ----------------------------------------------------------

def load_edges(path):
    from .graph import EdgeList

    edges = []
    num_nodes = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("nodes="):
                    if edges:
                        raise ParseError(f"{path}:{lineno}: nodes directive after edges", position=lineno)
                    try:
                        num_nodes = int(body[len("nodes="):])
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: bad nodes directive", position=lineno) from None
                continue
            parts = line.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise ParseError(f"{path}:{lineno}: expected two non-negative integers", position=lineno)
            out, inn = int(parts[0]), int(parts[1])
            if out == inn:
                raise ParseError(f"{path}:{lineno}: self-loop on node {out}", position=lineno)
            edges.append((out, inn))
    arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes is None:
        num_nodes = int(arr.max()) + 1 if arr.size else 0
    if arr.size and arr.max() >= num_nodes:
        raise ParseError(f"{path}: node id {int(arr.max())} exceeds nodes={num_nodes}")
    return EdgeList(arr, num_nodes)


def save_edges(path, edges) -> None:
    with open(path, "w") as f:
        f.write(f"# nodes={edges.num_nodes}\n")
        for out, inn in edges.edges:
            f.write(f"{out} {inn}\n")


def load_labels(path) -> np.ndarray:
    labels = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                labels.append(int(line.split(",")[0]))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: expected an integer label", position=lineno) from None
    return np.array(labels, dtype=np.int64)


def save_labels(path, labels) -> None:
    with open(path, "w") as f:
        for x in np.asarray(labels, dtype=np.int64):
            f.write(f"{x}\n")

