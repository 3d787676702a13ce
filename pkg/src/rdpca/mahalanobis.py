"""Squared regularized density Mahalanobis distances (RDMD) and their
Gaussian limiting law.

All distances are computed from principal scores ``z_i = <y - mean, xi_i>``
against operator eigenvalues ``lam_i``::

    M^2 = sum_{i<=k} z_i^2 / lam_i + sum_{i>k, lam_i>0} lam_i z_i^2 / (lam_i + alpha)^2

Under Gaussianity the same quantity is distributed as
``chi2(k) + sum_{i>k} lam_i^2 / (lam_i + alpha)^2 chi2(1)_i``; medians and
quantiles of that mixture are estimated by seeded Monte Carlo.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bayes import DensityCurve, check_same_grid, clr_array
from .errors import ArgumentError, NumericError, ShapeError
from .spectral import SpectralModel, check_split

DEFAULT_MC_DRAWS = 50_000


@dataclass(frozen=True)
class RegParams:
    """Tuning parameters of the regularized distance and the robust fit."""

    alpha: float = 1.0
    k: int = 1
    h_frac: float = 0.75
    eps_k: float = 1e-4
    mc_draws: int = DEFAULT_MC_DRAWS
    quantile: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ArgumentError(f"alpha must be positive, got {self.alpha}")
        if int(self.k) != self.k or self.k < 0:
            raise ArgumentError(f"k must be a nonnegative integer, got {self.k}")
        # half-sample trimming (h_frac = 0.5) is the maximal-breakdown choice
        if not 0.5 <= self.h_frac <= 1:
            raise ArgumentError(f"h_frac must lie in [0.5, 1], got {self.h_frac}")
        if not self.eps_k > 0:
            raise ArgumentError("eps_k must be positive")
        if int(self.mc_draws) != self.mc_draws or self.mc_draws < 1:
            raise ArgumentError("mc_draws must be a positive integer")
        if not 0 < self.quantile < 1:
            raise ArgumentError("quantile must lie in (0, 1)")

    def subset_size(self, n: int) -> int:
        return math.ceil(self.h_frac * n - 1e-9)


@dataclass(frozen=True, eq=False)
class DistanceReport:
    """Squared distances, the cutoff and the derived outlier flags."""

    squared_distances: np.ndarray = field(repr=False)
    cutoff: float
    flags: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = np.array(self.squared_distances, dtype=float)
        d.flags.writeable = False
        flags = d > self.cutoff
        flags.flags.writeable = False
        object.__setattr__(self, "squared_distances", d)
        object.__setattr__(self, "cutoff", float(self.cutoff))
        object.__setattr__(self, "flags", flags)

    def to_csv(self) -> str:
        lines = ["index,squared_distance,cutoff,flag"]
        for i, (d, f) in enumerate(zip(self.squared_distances, self.flags)):
            lines.append(f"{i},{float(d)!r},{self.cutoff!r},{int(f)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DistanceReport":
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != "index,squared_distance,cutoff,flag":
            raise ShapeError("distance file must start with 'index,squared_distance,cutoff,flag'")
        rows = [line.split(",") for line in lines[1:]]
        try:
            dists = [float(r[1]) for r in rows]
            cut = float(rows[0][2]) if rows else float("nan")
        except (ValueError, IndexError) as exc:
            raise ShapeError(f"bad distance row: {exc}") from None
        return cls(np.array(dists), cut)

    def to_dict(self) -> dict:
        return {
            "squared_distances": [float(d) for d in self.squared_distances],
            "cutoff": self.cutoff,
            "flags": [bool(f) for f in self.flags],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_spectrum(eigenvalues, k: int) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam < 0):
        raise ArgumentError("eigenvalues must be nonnegative")
    if np.any(np.diff(lam) > 0):
        raise ArgumentError("eigenvalues must be in descending order")
    check_split(lam, k)
    return lam


def rdmd_weights(eigenvalues, alpha: float, k: int) -> np.ndarray:
    """Multipliers ``w_i`` with ``M^2 = sum_i w_i z_i^2``."""
    if not alpha > 0:
        raise ArgumentError("alpha must be positive")
    lam = _check_spectrum(eigenvalues, k)
    w = np.zeros_like(lam)
    w[:k] = 1.0 / lam[:k]
    tail = lam[k:]
    pos = tail > 0
    w_tail = np.zeros_like(tail)
    w_tail[pos] = tail[pos] / (tail[pos] + alpha) ** 2
    w[k:] = w_tail
    return w


def rdmd_squared(scores, eigenvalues, alpha: float, k: int):
    """Squared RDMD from scores; ``scores`` may be a vector or an ``n x r`` matrix."""
    z = np.asarray(scores, dtype=float)
    w = rdmd_weights(eigenvalues, alpha, k)
    r = z.shape[-1]
    if r > w.size:
        raise ArgumentError("more scores than eigenvalues")
    out = (z**2) @ w[:r]
    return float(out) if np.ndim(out) == 0 else out


def truncated_md(scores, eigenvalues, k: int) -> float:
    """k-truncated functional Mahalanobis distance ``sum_{i<=k} z_i^2 / lam_i``."""
    lam = _check_spectrum(eigenvalues, k)
    z = np.asarray(scores, dtype=float)
    return float(np.sum(z[:k] ** 2 / lam[:k]))


def alpha_md(scores, eigenvalues, alpha: float) -> float:
    """alpha-Mahalanobis distance; identical to the RDMD with ``k = 0``."""
    return rdmd_squared(scores, eigenvalues, alpha, 0)


def squared_distances(rows: np.ndarray, model: SpectralModel, alpha: float, k: int) -> np.ndarray:
    """Squared RDMD of every clr row with respect to ``model``."""
    return rdmd_squared(model.scores(rows), model.eigenvalues, alpha, k)


def rdmd_between(x: DensityCurve, y: DensityCurve, model: SpectralModel, params: RegParams, c: float = 1.0) -> float:
    """Squared RDMD between two densities under ``model`` (regularizer ``alpha / c``)."""
    grid = check_same_grid(x.grid, y.grid, model.grid)
    if not c > 0:
        raise ArgumentError("scale c must be positive")
    zx = model.scores(clr_array(grid, x.values))
    zy = model.scores(clr_array(grid, y.values))
    return rdmd_squared(zx - zy, model.eigenvalues, params.alpha / c, params.k)


# -- limiting law -------------------------------------------------------------


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the ``(seed, *stream)`` substream; independent of call order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream)))


@lru_cache(maxsize=4)
def _base_draws(seed: int, m: int, k: int, terms: int):
    rng = stream_rng(seed, 0xC41)
    y = rng.chisquare(k, size=m) if k > 0 else np.zeros(m)
    eta = rng.standard_normal((m, terms)) ** 2 if terms else np.zeros((m, 0))
    y.flags.writeable = False
    eta.flags.writeable = False
    return y, eta


def limiting_weights(eigenvalues, alpha: float, k: int) -> np.ndarray:
    """``lam_i^2 / (lam_i + alpha)^2`` for the positive eigenvalues beyond ``k``."""
    lam = _check_spectrum(eigenvalues, k)
    tail = lam[k:]
    tail = tail[tail > 0]
    return tail**2 / (tail + alpha) ** 2


def limiting_draws(eigenvalues, alpha: float, k: int, m: int = DEFAULT_MC_DRAWS, seed: int = 0) -> np.ndarray:
    """``m`` draws of ``chi2(k) + sum_{i>k} lam_i^2/(lam_i+alpha)^2 chi2(1)_i``.

    The underlying chi-square variates depend only on ``(seed, m, k, #terms)``,
    so calls that differ only in ``alpha`` reuse the same randomness.
    """
    if not alpha > 0:
        raise ArgumentError("alpha must be positive")
    if int(m) != m or m < 1:
        raise ArgumentError("m must be a positive integer")
    w = limiting_weights(eigenvalues, alpha, k)
    y, eta = _base_draws(int(seed), int(m), int(k), w.size)
    return y + eta @ w


def _type1_quantile(x: np.ndarray, q: float) -> float:
    return float(np.quantile(x, q, method="inverted_cdf"))


def cutoff(eigenvalues, alpha: float, k: int, quantile: float = 0.95, m: int = DEFAULT_MC_DRAWS, seed: int = 0) -> float:
    """Empirical (order-statistic) quantile of the limiting law."""
    if not 0 < quantile < 1:
        raise ArgumentError("quantile must lie in (0, 1)")
    return _type1_quantile(limiting_draws(eigenvalues, alpha, k, m, seed), quantile)


def limiting_median(eigenvalues, alpha: float, k: int, m: int = DEFAULT_MC_DRAWS, seed: int = 0) -> float:
    return cutoff(eigenvalues, alpha, k, 0.5, m, seed)


def scale_median_ratio(raw_sq_distances, eigenvalues, alpha: float, k: int, m: int = DEFAULT_MC_DRAWS, seed: int = 0) -> float:
    """Median of the sample distances over the median of the limiting law."""
    raw = np.asarray(raw_sq_distances, dtype=float)
    if raw.size == 0:
        raise ArgumentError("need at least one distance")
    med = limiting_median(eigenvalues, alpha, k, m, seed)
    if not med > 0:
        raise NumericError("median of the limiting distribution is zero")
    return float(np.median(raw)) / med
