"""Simulated density samples with planted outliers.

Model family 1 builds every curve as a Gaussian KDE of a fresh sample; outliers
pool a few extra points from a narrow tail interval. Model family 2 builds clr
curves directly from a Fourier expansion with random scores.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .bayes import POSITIVITY_FLOOR, DensityCurve, Grid, center, clr_array, inv_clr_array
from .errors import ArgumentError
from .mahalanobis import stream_rng

MODEL_IDS = ("M1_1", "M1_2", "M1_3", "M2_1", "M2_2")

MODEL2_EIGENVALUES = (2.0, 1.0, 0.5, 0.25)
MODEL2_OUTLIER_EIGENVALUE = 4.0
MODEL22_OUTLIER_SCALES = (4.0, 3.0, 2.5, 2.25)
T_DOF = 5


@dataclass(frozen=True, eq=False)
class LabeledSample:
    curves: list
    labels: np.ndarray = field(repr=False)
    model_id: str
    true_cov: Optional[np.ndarray] = field(repr=False, default=None)
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.curves[0].grid

    @property
    def n(self) -> int:
        return len(self.curves)

    def density_matrix(self) -> np.ndarray:
        return np.stack([f.values for f in self.curves])

    def clr_matrix(self) -> np.ndarray:
        return clr_array(self.grid, self.density_matrix())


def normalize_model_id(model) -> str:
    """Accept ``M1_1``, ``m1.1``, ``1.1`` and similar spellings."""
    s = str(model).strip().upper().replace(".", "_")
    if not s.startswith("M"):
        s = "M" + s
    if s not in MODEL_IDS:
        raise ArgumentError(f"unknown simulation model {model!r}; expected one of {', '.join(MODEL_IDS)}")
    return s


# -- kernel density estimation ------------------------------------------------


def silverman_bandwidth(data) -> float:
    """Silverman's rule ``0.9 * min(sd, IQR / 1.34) * N^(-1/5)``."""
    x = np.asarray(data, dtype=float)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    lo = min(sd, iqr / 1.34)
    if lo == 0:
        lo = sd
    return 0.9 * lo * x.size ** -0.2


def kde_values(data, points: np.ndarray, bandwidth: float) -> np.ndarray:
    """Raw Gaussian KDE ``(1 / (N bw)) sum_j phi((t - Y_j) / bw)`` at ``points``."""
    x = np.asarray(data, dtype=float)
    u = (points[:, None] - x[None, :]) / bandwidth
    return np.exp(-0.5 * u**2).sum(axis=1) / (x.size * bandwidth * math.sqrt(2 * math.pi))


def gaussian_kde(data, grid: Grid, bandwidth="auto") -> DensityCurve:
    """Gaussian KDE evaluated on ``grid`` and renormalized to unit integral.

    Values that underflow are clipped at :data:`~rdpca.bayes.POSITIVITY_FLOOR`
    with a ``RuntimeWarning``.
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 2:
        raise ArgumentError("KDE needs at least two data points")
    bw = silverman_bandwidth(x) if bandwidth in (None, "auto") else float(bandwidth)
    if not bw > 0:
        raise ArgumentError(f"KDE bandwidth must be positive, got {bw}")
    vals = kde_values(x, grid.points, bw)
    if np.any(vals <= POSITIVITY_FLOOR):
        warnings.warn("KDE values clipped at the positivity floor", RuntimeWarning, stacklevel=2)
        vals = np.maximum(vals, POSITIVITY_FLOOR)
    return DensityCurve.normalized(grid, vals)


# -- model family 1 -------------------------------------------------------------


def _model1_setup(variant: str):
    """(regular sampler, contamination sampler, contamination rate)."""
    if variant == "M1_1":
        q1, q2 = stats.norm.ppf([0.001, 0.005])

        def contaminate(rng, size):
            side = rng.random(size) < 0.5
            u = rng.uniform(q1, q2, size)
            return np.where(side, u, -u)

        return (lambda rng, size: rng.standard_normal(size)), contaminate, 0.1
    if variant == "M1_2":
        q1, q2 = stats.norm.ppf([0.0001, 0.0025])
        return (lambda rng, size: rng.standard_normal(size)), (lambda rng, size: rng.uniform(q1, q2, size)), 0.05
    if variant == "M1_3":
        q3, q4 = stats.chi2.ppf([0.001, 0.002], 6)
        return (lambda rng, size: rng.chisquare(6, size)), (lambda rng, size: rng.uniform(q3, q4, size)), 0.1
    raise ArgumentError(f"{variant} is not a KDE model")


def _model1_raw(variant, n_reg, n_out, N, rng):
    regular, contaminate, rate = _model1_setup(variant)
    extra = math.floor(rate * N)
    draws = [regular(rng, N) for _ in range(n_reg + n_out)]
    for i in range(n_reg, n_reg + n_out):
        draws[i] = np.concatenate([draws[i], contaminate(rng, extra)])
    return draws


SUPPORT_RULES = ("quantile", "range")
#: Tail probability cut from each side of the pooled regular sample by the
#: ``"quantile"`` support rule.
SUPPORT_TAIL = 0.001


def _support_grid(regular_draws, p: int, rule: str = "quantile") -> tuple[Grid, float]:
    """Shared KDE grid.

    ``"range"`` spans the pooled regular draws widened by three reference
    bandwidths; ``"quantile"`` spans the pooled ``[0.1%, 99.9%]`` quantiles,
    where every curve is still backed by data.
    """
    pooled = np.concatenate(regular_draws)
    bw_ref = float(np.median([silverman_bandwidth(d) for d in regular_draws]))
    if rule == "range":
        return Grid(pooled.min() - 3 * bw_ref, pooled.max() + 3 * bw_ref, p), bw_ref
    if rule == "quantile":
        lo, hi = np.quantile(pooled, [SUPPORT_TAIL, 1 - SUPPORT_TAIL])
        return Grid(float(lo), float(hi), p), bw_ref
    raise ArgumentError(f"support rule must be one of {SUPPORT_RULES}, got {rule!r}")


def _kde_rows(draws, grid: Grid) -> tuple[np.ndarray, list]:
    rows, bws = [], []
    clipped = False
    for d in draws:
        bw = silverman_bandwidth(d)
        vals = kde_values(d, grid.points, bw)
        if np.any(vals <= POSITIVITY_FLOOR):
            clipped = True
            vals = np.maximum(vals, POSITIVITY_FLOOR)
        rows.append(vals / grid.integrate(vals))
        bws.append(bw)
    if clipped:
        warnings.warn("KDE values clipped at the positivity floor", RuntimeWarning, stacklevel=3)
    return np.array(rows), bws


def _sample_cov(rows: np.ndarray) -> np.ndarray:
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / rows.shape[0]
    return 0.5 * (cov + cov.T)


def gen_model1(
    variant="M1_1", n=200, p=50, c=0.0, N=250, seed=0, true_cov_reps=2000, support="quantile"
) -> LabeledSample:
    """KDE density sample; the last ``floor(c n)`` curves are outliers.

    The grid is fixed once per dataset from the regular draws by the
    ``support`` rule (see :func:`_support_grid`). ``true_cov`` is a Monte Carlo clr covariance of
    ``true_cov_reps`` regular curves on that grid (``None`` if 0).
    """
    variant = normalize_model_id(variant)
    if not variant.startswith("M1"):
        raise ArgumentError(f"{variant} is not a KDE model")
    if not 0 <= c < 1:
        raise ArgumentError("contamination c must lie in [0, 1)")
    n_out = math.floor(c * n)
    rng = stream_rng(seed, 1)
    draws = _model1_raw(variant, n - n_out, n_out, N, rng)
    grid, bw_ref = _support_grid(draws[: n - n_out] or draws, p, support)
    rows, bws = _kde_rows(draws, grid)
    curves = [DensityCurve(grid, r) for r in rows]
    labels = np.zeros(n, dtype=bool)
    labels[n - n_out :] = True
    true_cov = mc_true_cov(variant, true_cov_reps, p, seed, grid=grid, N=N) if true_cov_reps else None
    meta = {
        "model": variant,
        "n": n,
        "p": p,
        "c": c,
        "N": N,
        "seed": seed,
        "grid": {"a": grid.a, "b": grid.b, "p": grid.p},
        "support": support,
        "reference_bandwidth": bw_ref,
        "bandwidths": bws,
        "true_cov": f"monte carlo, {true_cov_reps} regular curves" if true_cov_reps else None,
    }
    return LabeledSample(curves, labels, variant, true_cov, seed, meta)


# -- model family 2 -------------------------------------------------------------


def fourier_basis(grid: Grid) -> np.ndarray:
    """Rows xi_1..xi_5: four sqrt(2) sin/cos functions and a centered, normalized linear trend."""
    t = (grid.points - grid.a) / grid.length
    s2 = math.sqrt(2.0)
    xi5 = center(grid, t)
    xi5 = xi5 / math.sqrt(grid.inner(xi5, xi5))
    return np.stack(
        [
            s2 * np.sin(2 * np.pi * t),
            s2 * np.cos(2 * np.pi * t),
            s2 * np.sin(4 * np.pi * t),
            s2 * np.cos(4 * np.pi * t),
            xi5,
        ]
    )


def _scores(rng, scales, size, dist):
    scales = np.asarray(scales, dtype=float)
    g = rng.standard_normal((size, scales.size)) * np.sqrt(scales)
    if dist == "normal":
        return g
    w = rng.chisquare(T_DOF, size)
    return g * np.sqrt(T_DOF / w)[:, None]


def model2_true_cov(grid: Grid, score_dist="normal") -> np.ndarray:
    xi = fourier_basis(grid)[:4]
    cov = (xi.T * np.array(MODEL2_EIGENVALUES)) @ xi
    if score_dist == "t5":
        cov = cov * T_DOF / (T_DOF - 2)
    return cov


def _model2_clr(variant, score_dist, n_reg, n_out, grid, rng):
    xi = fourier_basis(grid)
    reg = _scores(rng, MODEL2_EIGENVALUES, n_reg, score_dist) @ xi[:4]
    if variant == "M2_1":
        out = _scores(rng, MODEL2_EIGENVALUES + (MODEL2_OUTLIER_EIGENVALUE,), n_out, score_dist) @ xi
    else:
        out = _scores(rng, MODEL22_OUTLIER_SCALES, n_out, score_dist) @ xi[:4]
    return center(grid, np.vstack([reg, out]))


def gen_model2(variant="M2_1", score_dist="normal", n=200, p=100, c=0.0, seed=0) -> LabeledSample:
    """Fourier-score clr sample on [0, 1]; the last ``floor(c n)`` curves are outliers."""
    variant = normalize_model_id(variant)
    if not variant.startswith("M2"):
        raise ArgumentError(f"{variant} is not a Fourier-score model")
    if score_dist not in ("normal", "t5"):
        raise ArgumentError(f"score distribution must be 'normal' or 't5', got {score_dist!r}")
    if not 0 <= c < 1:
        raise ArgumentError("contamination c must lie in [0, 1)")
    grid = Grid(0.0, 1.0, p)
    n_out = math.floor(c * n)
    rng = stream_rng(seed, 1)
    clr = _model2_clr(variant, score_dist, n - n_out, n_out, grid, rng)
    dens = inv_clr_array(grid, clr)
    curves = [DensityCurve(grid, r) for r in dens]
    labels = np.zeros(n, dtype=bool)
    labels[n - n_out :] = True
    meta = {
        "model": variant,
        "scores": score_dist,
        "n": n,
        "p": p,
        "c": c,
        "seed": seed,
        "grid": {"a": grid.a, "b": grid.b, "p": grid.p},
        "true_cov": "analytic sum of lambda_i xi_i xi_i^T"
        + (" times t5 variance factor 5/3 (scores sampled with scale diag(lambda))" if score_dist == "t5" else ""),
    }
    return LabeledSample(curves, labels, variant, model2_true_cov(grid, score_dist), seed, meta)


def mc_true_cov(
    variant, reps: int, p: int, seed: int = 0, grid: Optional[Grid] = None, N: int = 250, score_dist="normal", support="quantile"
):
    """Sample clr covariance of ``reps`` regular-only curves of a model."""
    variant = normalize_model_id(variant)
    if reps < 100:
        raise ArgumentError("mc_true_cov needs reps >= 100")
    rng = stream_rng(seed, 2)
    if variant.startswith("M1"):
        draws = _model1_raw(variant, reps, 0, N, rng)
        if grid is None:
            grid, _ = _support_grid(draws, p, support)
        rows, _ = _kde_rows(draws, grid)
        clr = clr_array(grid, rows)
    else:
        grid = grid or Grid(0.0, 1.0, p)
        clr = _model2_clr(variant, score_dist, reps, 0, grid, rng)
    return _sample_cov(clr)


def generate(
    model, n=200, p=None, c=0.0, N=250, scores="normal", seed=0, true_cov_reps=2000, support="quantile"
) -> LabeledSample:
    """Dispatch to :func:`gen_model1` or :func:`gen_model2` by model id."""
    model = normalize_model_id(model)
    if model.startswith("M1"):
        return gen_model1(model, n=n, p=p or 50, c=c, N=N, seed=seed, true_cov_reps=true_cov_reps, support=support)
    return gen_model2(model, score_dist=scores, n=n, p=p or 100, c=c, seed=seed)
