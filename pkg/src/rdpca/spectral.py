"""Trimmed clr mean/covariance, operator eigendecomposition and the
regularized standardization.

Covariances are stored as pointwise matrices ``K[i, j] ~ cov(Y(t_i), Y(t_j))``.
The integral operator they discretize acts as ``(K f)(t_i) = dt * sum_j K[i, j] f[j]``,
so its eigenvalues are those of ``dt * K`` and its eigenfunctions are
orthonormal under the ``dt``-weighted inner product. That operator convention
is used everywhere so eigenvalues do not depend on ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bayes import Grid
from .errors import ArgumentError, ShapeError, TieError

#: Eigenvalues below this fraction of the largest one are set to zero.
RANK_RTOL = 1e-12
SYMMETRY_TOL = 1e-8


def _readonly(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ClrSample:
    """``n x p`` matrix of clr curves sharing one grid."""

    grid: Grid
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = _readonly(np.atleast_2d(self.rows))
        if rows.shape[1] != self.grid.p:
            raise ShapeError(f"rows have {rows.shape[1]} columns, grid has {self.grid.p} points")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    grid: Grid
    mean: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    subset: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(self.mean))
        object.__setattr__(self, "matrix", _readonly(self.matrix))
        object.__setattr__(self, "subset", tuple(int(i) for i in self.subset))


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Mean curve plus descending eigenpairs of a covariance operator.

    ``eigenfunctions`` is a ``p x p`` array whose *rows* are the
    eigenfunctions, matching the order of ``eigenvalues``.
    """

    grid: Grid
    mean: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(self.mean))
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        object.__setattr__(self, "eigenfunctions", _readonly(np.atleast_2d(self.eigenfunctions)))

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > 0))

    def scores(self, y: np.ndarray) -> np.ndarray:
        """Coordinates ``<y - mean, xi_i>`` for a curve or stack of curves."""
        centered = np.asarray(y, dtype=float) - self.mean
        return self.grid.dt * centered @ self.eigenfunctions.T

    def covariance_matrix(self) -> np.ndarray:
        """Pointwise covariance ``sum_i lambda_i xi_i xi_i^T``."""
        return (self.eigenfunctions.T * self.eigenvalues) @ self.eigenfunctions


def _as_subset(H, n: int) -> np.ndarray:
    idx = np.unique(np.asarray(list(H), dtype=int))
    if idx.size == 0:
        raise ArgumentError("subset H is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ArgumentError(f"subset indices must lie in [0, {n})")
    return idx


def trimmed_mean(sample: ClrSample, H: Sequence[int]) -> np.ndarray:
    idx = _as_subset(H, sample.n)
    return sample.rows[idx].mean(axis=0)


def trimmed_cov(sample: ClrSample, H: Sequence[int], scale: float = 1.0) -> CovarianceEstimate:
    """``scale / |H| * sum_{i in H} (y_i - mean)(y_i - mean)^T`` on the subset H."""
    idx = _as_subset(H, sample.n)
    if idx.size < 2:
        raise ArgumentError("trimmed covariance needs |H| >= 2")
    if scale < 0:
        raise ArgumentError("scale must be nonnegative")
    mean = sample.rows[idx].mean(axis=0)
    centered = sample.rows[idx] - mean
    matrix = scale * (centered.T @ centered) / idx.size
    return CovarianceEstimate(sample.grid, mean, matrix, subset=tuple(idx), scale=float(scale))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # rows: make the first coordinate of significant magnitude positive
    out = vectors.copy()
    for row in out:
        mags = np.abs(row)
        top = mags.max()
        if top == 0:
            continue
        j = int(np.argmax(mags > 1e-8 * top))
        if row[j] < 0:
            row *= -1
    return out


def eig_sym(cov: CovarianceEstimate) -> SpectralModel:
    """Eigendecomposition of the covariance operator (descending order)."""
    K = np.asarray(cov.matrix, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError("covariance matrix must be square")
    asym = np.max(np.abs(K - K.T)) if K.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(K))):
        raise ArgumentError(f"covariance matrix is not symmetric (max asymmetry {asym:.3g})")
    dt = cov.grid.dt
    op = 0.5 * (K + K.T) * dt
    vals, vecs = np.linalg.eigh(op)
    order = np.argsort(vals, kind="stable")[::-1]
    vals = vals[order]
    vecs = vecs[:, order].T / np.sqrt(dt)
    top = vals[0] if vals.size else 0.0
    if top <= 0:
        vals = np.zeros_like(vals)
    else:
        vals = np.where(vals < RANK_RTOL * top, 0.0, vals)
    return SpectralModel(cov.grid, cov.mean, vals, _fix_signs(vecs))


def check_split(eigenvalues: np.ndarray, k: int) -> int:
    """Validate the number ``k`` of whitened components; returns the rank."""
    lam = np.asarray(eigenvalues, dtype=float)
    rank = int(np.count_nonzero(lam > 0))
    if k < 0:
        raise ArgumentError("k must be nonnegative")
    if k > rank:
        raise ArgumentError(f"k={k} exceeds the number of positive eigenvalues ({rank})")
    return rank


def standardize(y: np.ndarray, model: SpectralModel, alpha: float, k: int, c: float = 1.0) -> np.ndarray:
    """Regularized standardization of clr curve(s) ``y``.

    The leading ``k`` components are whitened exactly; the remaining ones are
    shrunk by the Tikhonov filter ``sqrt(lam) / (lam + alpha / c)``. Accepts a
    single curve or an ``n x p`` stack and returns the same shape.
    """
    if alpha <= 0:
        raise ArgumentError("alpha must be positive")
    if c <= 0:
        raise ArgumentError("scale c must be positive")
    lam = model.eigenvalues
    rank = check_split(lam, k)
    if k >= rank:
        raise ArgumentError(f"k={k} must be below the rank {rank}")
    if k >= 1 and lam[k - 1] == lam[k]:
        raise TieError(f"eigenvalues {k} and {k + 1} coincide; the first-k projector is ambiguous")
    return (model.scores(y) * filter_weights(lam, alpha / c, k)) @ model.eigenfunctions


def filter_weights(eigenvalues: np.ndarray, alpha: float, k: int) -> np.ndarray:
    """Per-component multipliers of the standardization."""
    lam = np.asarray(eigenvalues, dtype=float)
    w = np.zeros_like(lam)
    pos = lam > 0
    head = np.zeros_like(pos)
    head[:k] = True
    w[head & pos] = lam[head & pos] ** -0.5
    tail = pos & ~head
    w[tail] = np.sqrt(lam[tail]) / (lam[tail] + alpha)
    return w

