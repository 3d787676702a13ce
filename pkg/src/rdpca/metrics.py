"""Evaluation statistics for simulation studies: ISE of covariance
surfaces, mean eigenfunction cosine, explained-variance ratios and
outlier-detection rates.
"""

from __future__ import annotations

import numpy as np

from .bayes import check_same_grid
from .errors import ArgumentError, NumericError, ShapeError
from .mahalanobis import DistanceReport
from .spectral import SpectralModel


def ise(a, b) -> float:
    """Integrated square error ``p^-2 * sum (a - b)^2`` of two ``p x p`` surfaces."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"ise needs two square matrices of equal shape, got {a.shape} and {b.shape}")
    p = a.shape[0]
    return float(np.sum((a - b) ** 2) / p**2)


def mean_cosine(a: SpectralModel, b: SpectralModel, count: int) -> float:
    """Mean absolute cosine between the first ``count`` eigenfunction pairs.

    The absolute value makes the measure blind to the arbitrary sign of
    each eigenfunction.
    """
    grid = check_same_grid(a.grid, b.grid)
    if count < 1:
        raise ArgumentError("count must be at least 1")
    if count > min(a.rank, b.rank):
        raise ArgumentError(f"count={count} exceeds the available eigenfunctions ({a.rank}, {b.rank})")
    xa = a.eigenfunctions[:count]
    xb = b.eigenfunctions[:count]
    num = np.abs(grid.inner(xa, xb))
    den = np.sqrt(grid.inner(xa, xa) * grid.inner(xb, xb))
    return float(np.mean(num / den))


def explained_variance(model: SpectralModel, count: int) -> np.ndarray:
    """Ratios ``lam_j / sum(lam)`` for ``j = 1..count``."""
    lam = np.asarray(model.eigenvalues, dtype=float)
    total = lam.sum()
    if not total > 0:
        raise NumericError("explained variance of an all-zero spectrum")
    if count < 1 or count > lam.size:
        raise ArgumentError(f"count must lie in [1, {lam.size}]")
    return lam[:count] / total


def tpr_tnr(report, labels) -> tuple[float, float]:
    """True positive and true negative rates of outlier flags.

    ``report`` is a :class:`DistanceReport` or a boolean flag vector; a rate
    with an empty denominator is returned as NaN (missing).
    """
    flags = report.flags if isinstance(report, DistanceReport) else np.asarray(report, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if flags.shape != labels.shape:
        raise ShapeError(f"{flags.size} flags but {labels.size} labels")
    pos = labels.sum()
    neg = labels.size - pos
    tpr = float(np.sum(flags & labels) / pos) if pos else float("nan")
    tnr = float(np.sum(~flags & ~labels) / neg) if neg else float("nan")
    return tpr, tnr
