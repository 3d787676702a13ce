"""Discretized Bayes-space geometry for univariate densities.

Densities live on an equidistant midpoint grid over ``[a, b]``; integrals are
Riemann sums with weight ``dt = (b - a) / p``. Every equivalence class of
proportional densities is stored through its unit-integral member, and every
clr image is kept centered (zero integral).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DomainError, RangeError, ShapeError

#: Tolerance of the unit-integral / zero-integral representative checks.
INTEGRAL_TOL = 1e-8
#: Densities are clipped at this floor before taking logarithms.
POSITIVITY_FLOOR = 1e-300
#: ``exp`` overflows (or loses everything to underflow) beyond this.
EXP_LIMIT = 700.0


@dataclass(frozen=True)
class Grid:
    """Equidistant midpoint grid with ``p`` cells on ``[a, b]``.

    ``points[i] = a + (i + 1/2) * dt``. The midpoint placement makes the
    Riemann sum the midpoint rule, so trigonometric bases on a full period
    are orthonormal to machine precision.
    """

    a: float
    b: float
    p: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.b <= self.a:
            raise ArgumentError(f"grid needs a < b, got a={self.a}, b={self.b}")
        if int(self.p) != self.p or self.p < 2:
            raise ArgumentError(f"grid needs p >= 2 points, got {self.p}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "p", int(self.p))

    @property
    def dt(self) -> float:
        return (self.b - self.a) / self.p

    @property
    def length(self) -> float:
        return self.b - self.a

    @cached_property
    def points(self) -> np.ndarray:
        pts = self.a + (np.arange(self.p) + 0.5) * self.dt
        pts.flags.writeable = False
        return pts

    @classmethod
    def from_points(cls, points: Sequence[float]) -> "Grid":
        """Recover the grid whose midpoints are ``points``.

        Raises ShapeError unless the abscissae are strictly increasing and
        equidistant to relative tolerance 1e-12.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ShapeError("a grid needs at least two abscissae")
        steps = np.diff(pts)
        step = (pts[-1] - pts[0]) / (pts.size - 1)
        if step <= 0 or np.any(steps <= 0):
            raise ShapeError("grid abscissae must be strictly increasing")
        scale = max(abs(pts[0]), abs(pts[-1]), step)
        if np.max(np.abs(steps - step)) > 1e-12 * scale * pts.size:
            raise ShapeError("grid abscissae are not equidistant")
        return cls(pts[0] - step / 2, pts[-1] + step / 2, pts.size)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Riemann integral along the last axis."""
        return self.dt * np.sum(values, axis=-1)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """L2 inner product of (stacks of) discretized functions."""
        return self.dt * np.sum(np.asarray(f) * np.asarray(g), axis=-1)

    def same_as(self, other: "Grid") -> bool:
        return self.p == other.p and np.isclose(self.a, other.a, rtol=1e-12, atol=1e-12) and np.isclose(
            self.b, other.b, rtol=1e-12, atol=1e-12
        )


def check_same_grid(*grids: Grid) -> Grid:
    first = grids[0]
    for g in grids[1:]:
        if not first.same_as(g):
            raise ShapeError(f"grid mismatch: {first} vs {g}")
    return first


def _frozen(values, p: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (p,):
        raise ShapeError(f"expected {p} values, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DensityCurve:
    """Positive density on a grid, stored with unit Riemann integral."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values, self.grid.p)
        bad = np.flatnonzero(~(vals > 0) | ~np.isfinite(vals))
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"density value at index {i} is not strictly positive: {vals[i]!r}", index=i)
        total = self.grid.integrate(vals)
        if abs(total - 1.0) > INTEGRAL_TOL:
            raise DomainError(f"density integrates to {total!r}, not 1; use DensityCurve.normalized")
        object.__setattr__(self, "values", vals)

    @classmethod
    def normalized(cls, grid: Grid, values) -> "DensityCurve":
        """Unit-integral representative of the class of ``values``."""
        vals = np.asarray(values, dtype=float)
        total = grid.integrate(vals)
        if not np.isfinite(total) or total <= 0:
            raise DomainError(f"cannot normalize values with integral {total!r}")
        return cls(grid, vals / total)

    @classmethod
    def uniform(cls, grid: Grid) -> "DensityCurve":
        return cls(grid, np.full(grid.p, 1.0 / grid.length))


@dataclass(frozen=True, eq=False)
class ClrCurve:
    """clr image of a density: a discretized function with zero integral."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = _frozen(self.values, self.grid.p)
        if not np.all(np.isfinite(vals)):
            raise DomainError("clr values must be finite")
        total = self.grid.integrate(vals)
        if abs(total) > INTEGRAL_TOL:
            raise DomainError(f"clr curve integrates to {total!r}, not 0; use ClrCurve.centered")
        object.__setattr__(self, "values", vals)

    @classmethod
    def centered(cls, grid: Grid, values) -> "ClrCurve":
        return cls(grid, center(grid, np.asarray(values, dtype=float)))


# -- array-level kernels -----------------------------------------------------


def center(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Subtract the mean value (integral / length) along the last axis."""
    values = np.asarray(values, dtype=float)
    return values - (grid.integrate(values) / grid.length)[..., None]


def clr_array(grid: Grid, values: np.ndarray, *, floor: bool = False) -> np.ndarray:
    """clr of one density (1-d) or a stack of densities (rows).

    With ``floor=True`` non-positive values are clipped to
    :data:`POSITIVITY_FLOOR` with a warning instead of raising.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.p:
        raise ShapeError(f"expected {grid.p} values per curve, got {values.shape[-1]}")
    bad = ~(values > POSITIVITY_FLOOR) if floor else ~(values > 0)
    bad |= ~np.isfinite(values)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        where = tuple(int(i) for i in idx)
        if floor and np.all(np.isfinite(values)):
            warnings.warn(
                f"density values at or below {POSITIVITY_FLOOR:g} clipped (first at index {where})",
                RuntimeWarning,
                stacklevel=2,
            )
            values = np.maximum(values, POSITIVITY_FLOOR)
        else:
            i = where[-1] if len(where) == 1 else where
            raise DomainError(f"density value at index {i} is not strictly positive", index=i)
    return center(grid, np.log(values))


def inv_clr_array(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Unit-integral densities from clr values (1-d or stacked rows)."""
    values = np.asarray(values, dtype=float)
    if np.any(np.abs(values) > EXP_LIMIT):
        raise RangeError(f"clr values exceed +/-{EXP_LIMIT:g}; exp would overflow")
    dens = np.exp(values)
    return dens / grid.integrate(dens)[..., None]


# -- curve-level operations --------------------------------------------------


def clr_transform(f: DensityCurve) -> ClrCurve:
    """Centered log-ratio transform of a density."""
    return ClrCurve(f.grid, clr_array(f.grid, f.values))


def inv_clr(g: ClrCurve) -> DensityCurve:
    """Inverse clr: the unit-integral member of ``exp(g)``."""
    return DensityCurve(g.grid, inv_clr_array(g.grid, g.values))


def perturb(f: DensityCurve, g: DensityCurve) -> DensityCurve:
    """Bayes-space addition: pointwise product, renormalized."""
    grid = check_same_grid(f.grid, g.grid)
    return DensityCurve.normalized(grid, f.values * g.values)


def power(f: DensityCurve, alpha: float) -> DensityCurve:
    """Bayes-space scalar multiplication.

    Computed as ``inv_clr(alpha * clr(f))`` which equals the renormalized
    pointwise power but cannot overflow for large ``|alpha|``.
    """
    return inv_clr(ClrCurve.centered(f.grid, alpha * clr_array(f.grid, f.values)))


def bayes_inner(f: DensityCurve, g: DensityCurve) -> float:
    """Inner product of two densities, i.e. the L2 product of their clr images."""
    grid = check_same_grid(f.grid, g.grid)
    return float(grid.inner(clr_array(grid, f.values), clr_array(grid, g.values)))


def bayes_mean(sample: Sequence[DensityCurve]) -> DensityCurve:
    """Sample Bayes mean (normalized geometric mean)."""
    if len(sample) == 0:
        raise ArgumentError("bayes_mean of an empty sample")
    grid = check_same_grid(*(f.grid for f in sample))
    clr_rows = clr_array(grid, np.stack([f.values for f in sample]))
    return inv_clr(ClrCurve.centered(grid, clr_rows.mean(axis=0)))


def clr_matrix(sample: Sequence[DensityCurve]) -> tuple[Grid, np.ndarray]:
    """Stack the clr images of a sample into an ``n x p`` matrix."""
    if len(sample) == 0:
        raise ArgumentError("empty sample")
    grid = check_same_grid(*(f.grid for f in sample))
    return grid, clr_array(grid, np.stack([f.values for f in sample]))


def densities_from_matrix(grid: Grid, values: np.ndarray) -> list[DensityCurve]:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return [DensityCurve.normalized(grid, row) for row in values]
