"""Robust density PCA: concentration steps over h-subsets with a
median-matched scaling of the trimmed clr covariance.

The non-robust baseline :func:`sfpca` is plain PCA of the clr curves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .bayes import ClrCurve, DensityCurve, Grid, clr_matrix, inv_clr
from .errors import ArgumentError, ConvergenceError, DegenerateSubsetError, FitError, NumericError, SelectionError
from .mahalanobis import (
    DistanceReport,
    RegParams,
    alpha_md,
    cutoff,
    limiting_draws,
    limiting_median,
    squared_distances,
    stream_rng,
)
from .spectral import ClrSample, SpectralModel, eig_sym, filter_weights, trimmed_cov

log = logging.getLogger(__name__)

MAX_SCALE_ITER = 100
MAX_OUTER_ITER = 200


@dataclass(frozen=True, eq=False)
class RdpcaFit:
    h_opt: tuple
    c: float
    distances: DistanceReport
    model: SpectralModel
    bayes_eigenfunctions: list = field(repr=False)
    alpha_used: float
    iterations: int
    objective_trace: list = field(repr=False)
    params: Optional[RegParams] = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.model.eigenvalues

    def covariance_matrix(self) -> np.ndarray:
        """Scaled robust pointwise clr covariance."""
        return self.model.covariance_matrix()


class CStep(NamedTuple):
    """Result of one concentration step from ``H_prev``.

    ``objective`` is the mean scaled distance over ``H_prev`` with respect to
    the estimates of ``H_prev`` itself; ``raw_distances`` are the unscaled
    distances of all curves at regularizer ``alpha / c``.
    """

    subset: tuple
    c: float
    raw_distances: np.ndarray
    objective: float
    model: SpectralModel


def as_clr_sample(sample) -> ClrSample:
    if isinstance(sample, ClrSample):
        return sample
    grid, rows = clr_matrix(list(sample))
    return ClrSample(grid, rows)


def _subset_model(sample: ClrSample, H, k: int) -> SpectralModel:
    model = eig_sym(trimmed_cov(sample, H, 1.0))
    if model.rank < k + 1:
        raise DegenerateSubsetError(f"trimmed covariance has rank {model.rank}, need at least k + 1 = {k + 1}")
    lam = model.eigenvalues
    if k >= 1 and lam[k - 1] == lam[k]:
        raise DegenerateSubsetError(f"eigenvalues {k} and {k + 1} of the trimmed covariance coincide")
    return model


def _scale_iteration(sample: ClrSample, model: SpectralModel, params: RegParams):
    c1 = 1.0
    trace = [c1]
    for _ in range(MAX_SCALE_ITER):
        c0 = c1
        eff = params.alpha / c0
        raw = squared_distances(sample.rows, model, eff, params.k)
        med = limiting_median(model.eigenvalues, eff, params.k, params.mc_draws, params.seed)
        if not med > 0:
            raise NumericError("median of the limiting distribution is zero")
        c1 = float(np.median(raw)) / med
        trace.append(c1)
        if not c1 > 0:
            raise NumericError("scaling factor collapsed to zero (median distance is 0)")
        if (c1 - c0) ** 2 < params.eps_k:
            return c1, trace
    raise ConvergenceError(f"scale fixed point did not converge in {MAX_SCALE_ITER} iterations", trace)


def scale_fixed_point(sample, H: Sequence[int], params: RegParams) -> float:
    """Scaling factor of the trimmed covariance on ``H``.

    Iterates ``c <- med(d^2(alpha / c)) / med(limit(alpha / c))`` from ``c = 1``
    until successive values differ by less than ``sqrt(eps_k)``.
    """
    sample = as_clr_sample(sample)
    model = _subset_model(sample, H, params.k)
    return _scale_iteration(sample, model, params)[0]


def c_step(sample, H_prev: Sequence[int], params: RegParams) -> CStep:
    """One concentration step.

    Estimates mean and covariance on ``H_prev``, calibrates the scale, and
    returns the ``h`` observations with the smallest distances (ties go to
    the smaller index).
    """
    sample = as_clr_sample(sample)
    H_prev = tuple(sorted(set(int(i) for i in H_prev)))
    h = len(H_prev)
    model = _subset_model(sample, H_prev, params.k)
    c, _ = _scale_iteration(sample, model, params)
    raw = squared_distances(sample.rows, model, params.alpha / c, params.k)
    order = np.argsort(raw, kind="stable")
    H_next = tuple(sorted(int(i) for i in order[:h]))
    objective = float(np.mean(raw[list(H_prev)]) / c)
    return CStep(H_next, c, raw, objective, model)


def subset_objective(sample, H: Sequence[int], params: RegParams) -> float:
    """Mean scaled distance over ``H`` w.r.t. the estimates of ``H`` itself."""
    return c_step(sample, H, params).objective


def is_fixed_point(sample, H: Sequence[int], params: RegParams) -> bool:
    """Whether ``H`` reproduces itself under one concentration step."""
    H = tuple(sorted(set(int(i) for i in H)))
    return c_step(sample, H, params).subset == H


def sfpca(sample) -> SpectralModel:
    """Classical PCA of the clr curves (full sample, unscaled)."""
    sample = as_clr_sample(sample)
    if sample.n < 2:
        raise ArgumentError("sfpca needs at least two curves")
    return eig_sym(trimmed_cov(sample, range(sample.n), 1.0))


def _deterministic_start(sample: ClrSample, h: int, alpha: float) -> tuple:
    full = sfpca(sample)
    d = np.array([alpha_md(z, full.eigenvalues, alpha) for z in full.scores(sample.rows)])
    return tuple(sorted(int(i) for i in np.argsort(d, kind="stable")[:h]))


def _concentrate(sample: ClrSample, H: tuple, params: RegParams, max_iter: int):
    """Iterate C-steps from ``H``; returns (subset, objective, trace, iterations).

    ``trace`` holds the objective of every visited subset. The loop stops at
    a fixed point; on a revisited subset (a cycle) or at the iteration cap it
    keeps the visited subset with the smallest objective.
    """
    visited = {}
    trace = []
    for it in range(1, max_iter + 1):
        step = c_step(sample, H, params)
        trace.append(step.objective)
        visited[H] = step.objective
        if step.subset == H:
            return H, step.objective, trace, it
        if step.subset in visited:
            log.debug("C-steps revisited a subset after %d iterations", it)
            break
        H = step.subset
    else:
        log.warning("C-steps hit the %d-iteration cap", max_iter)
    best = min(visited, key=lambda S: (visited[S], S))
    return best, visited[best], trace, it


def initial_subsets(sample: ClrSample, h: int, params: RegParams, n_starts: int) -> list:
    starts = [_deterministic_start(sample, h, params.alpha)]
    for s in range(n_starts):
        rng = stream_rng(params.seed, 0x5EED, s)
        starts.append(tuple(sorted(int(i) for i in rng.choice(sample.n, size=h, replace=False))))
    return starts


def fit(
    sample,
    params: RegParams = RegParams(),
    n_starts: int = 10,
    *,
    max_iter: int = MAX_OUTER_ITER,
    starts: Optional[Sequence[Sequence[int]]] = None,
    fixed_scale: Optional[float] = None,
) -> RdpcaFit:
    """Robust density PCA.

    Parameters
    ----------
    sample : sequence of DensityCurve or ClrSample
    params : RegParams
    n_starts : int
        Number of random initial h-subsets, in addition to one deterministic
        start built from the smallest alpha-Mahalanobis distances under the
        full-sample covariance.
    max_iter : int
        Cap on concentration steps per start.
    starts : sequence of index sets, optional
        Explicit initial subsets; replaces the default starts.
    fixed_scale : float, optional
        Use this scaling factor for the final estimate instead of the
        calibrated one (``1`` reproduces an unscaled trimmed fit).

    Returns
    -------
    RdpcaFit
    """
    sample = as_clr_sample(sample)
    n = sample.n
    if n < 4:
        raise ArgumentError("robust fit needs at least 4 curves")
    h = params.subset_size(n)
    if starts is None:
        starts = initial_subsets(sample, h, params, n_starts)
    else:
        starts = [tuple(sorted(set(int(i) for i in s))) for s in starts]
        if any(len(s) != h for s in starts):
            raise ArgumentError(f"every start must contain h = {h} indices")

    best = None
    errors = []
    for idx, H0 in enumerate(starts):
        try:
            H, obj, trace, iters = _concentrate(sample, H0, params, max_iter)
        except (DegenerateSubsetError, ConvergenceError, NumericError) as exc:
            errors.append(exc)
            log.debug("start %d failed: %s", idx, exc)
            continue
        if best is None or (obj, idx) < (best[1], best[4]):
            best = (H, obj, trace, iters, idx)
    if best is None:
        raise FitError(f"all {len(starts)} starts degenerate; last error: {errors[-1]}")
    H_opt, _, trace, iters, _ = best

    base = _subset_model(sample, H_opt, params.k)
    c = _scale_iteration(sample, base, params)[0] if fixed_scale is None else float(fixed_scale)
    model = eig_sym(trimmed_cov(sample, H_opt, c))
    dist = squared_distances(sample.rows, model, params.alpha, params.k)
    cut = cutoff(model.eigenvalues, params.alpha, params.k, params.quantile, params.mc_draws, params.seed)
    report = DistanceReport(dist, cut)
    bayes = [inv_clr(ClrCurve.centered(sample.grid, xi)) for xi in model.eigenfunctions[: model.rank]]
    return RdpcaFit(H_opt, c, report, model, bayes, params.alpha, iters, trace, params)


def sfpca_report(sample, params: RegParams) -> tuple[SpectralModel, DistanceReport]:
    """Baseline model with RDMDs w.r.t. the full-sample clr covariance and their cutoff."""
    sample = as_clr_sample(sample)
    model = sfpca(sample)
    dist = squared_distances(sample.rows, model, params.alpha, params.k)
    cut = cutoff(model.eigenvalues, params.alpha, params.k, params.quantile, params.mc_draws, params.seed)
    return model, DistanceReport(dist, cut)


# -- regularization parameter selection -----------------------------------------

DEFAULT_ALPHA_GRID = tuple(np.geomspace(1e-4, 1e2, 30))
SELECT_MAX_ITER = 20


class AlphaPath(NamedTuple):
    alphas: np.ndarray
    contrast: np.ndarray
    snr: np.ndarray
    selected: float
    ceiling: float = float("inf")


def standardized_snr(sample: ClrSample, result: RdpcaFit, k: int) -> float:
    """Mean of the top-k over the mean of the remaining positive eigenvalues of
    the covariance of the standardized h-subset."""
    rows = sample.rows[list(result.h_opt)]
    st = (result.model.scores(rows) * _weights(result, k)) @ result.model.eigenfunctions
    lam = eig_sym(trimmed_cov(ClrSample(sample.grid, st), range(len(rows)))).eigenvalues
    lam = lam[lam > 0]
    head = lam[: max(k, 1)]
    tail = lam[max(k, 1) :]
    return float(head.mean() / tail.mean()) if tail.size else float("inf")


def _weights(result: RdpcaFit, k: int) -> np.ndarray:
    return filter_weights(result.model.eigenvalues, result.alpha_used, k)


def outlyingness_contrast(sample, result: RdpcaFit, params: RegParams) -> float:
    """How strongly the trimmed observations stand out from the h-subset.

    The median scaled distance of the ``n - h`` excluded observations is
    divided by the median of the limiting law's upper tail beyond its
    ``h/n`` quantile, i.e. by what the most outlying ``n - h`` regular
    observations would score. Clean Gaussian data scores about 1 for any
    alpha. Medians keep a masked fit (outliers absorbed into the h-subset,
    a handful of extreme regular curves excluded) from scoring high.
    """
    sample = as_clr_sample(sample)
    n = sample.n
    inside = np.zeros(n, dtype=bool)
    inside[list(result.h_opt)] = True
    if inside.all():
        return float("nan")
    d = result.distances.squared_distances
    law = np.sort(limiting_draws(result.model.eigenvalues, params.alpha, params.k, params.mc_draws, params.seed))
    q = int(round(law.size * inside.sum() / n))
    q = min(max(q, 1), law.size - 1)
    return float(np.median(d[~inside]) / np.median(law[q:]))


ALPHA_CRITERIA = ("contrast", "snr")


def alpha_ceiling(sample, k: int) -> float:
    """Largest alpha worth scoring: the first regularized eigenvalue.

    Beyond ``lam_{k+1}`` of the full-sample covariance every regularized
    component is shrunk by at least a factor four and the distance collapses
    towards the truncated one on the leading ``k`` components; trimming on
    that distance alone cuts along the leading directions only. Returns
    ``inf`` when the spectrum has no ``(k+1)``-th positive eigenvalue.
    """
    lam = sfpca(as_clr_sample(sample)).eigenvalues
    return float(lam[k]) if k < lam.size and lam[k] > 0 else float("inf")


def alpha_path(
    sample, params: RegParams = RegParams(), alpha_grid=DEFAULT_ALPHA_GRID, criterion: str = "contrast"
) -> AlphaPath:
    """Score every candidate alpha with a short fit (see :func:`select_alpha`).

    Both criteria are evaluated; ``criterion`` decides which one picks
    ``selected``. Candidates above :func:`alpha_ceiling` are not scored
    (their entries stay NaN) unless no candidate lies below it, in which case
    only the smallest one is scored.
    """
    if criterion not in ALPHA_CRITERIA:
        raise ArgumentError(f"criterion must be one of {ALPHA_CRITERIA}, got {criterion!r}")
    sample = as_clr_sample(sample)
    grid = np.asarray(sorted(float(a) for a in alpha_grid))
    if grid.size == 0:
        raise ArgumentError("alpha grid is empty")
    if not np.all(grid > 0):
        raise ArgumentError("alpha candidates must be positive")
    ceiling = alpha_ceiling(sample, params.k)
    active = grid <= ceiling
    if not active.any():
        active[0] = True
    contrast = np.full(grid.size, np.nan)
    snr = np.full(grid.size, np.nan)
    for j in np.flatnonzero(active):
        p = replace(params, alpha=float(grid[j]))
        try:
            res = fit(sample, p, n_starts=1, max_iter=SELECT_MAX_ITER)
        except (FitError, NumericError) as exc:
            log.debug("alpha=%g: short fit failed (%s)", grid[j], exc)
            continue
        contrast[j] = outlyingness_contrast(sample, res, p)
        snr[j] = standardized_snr(sample, res, p.k)
    score = contrast if criterion == "contrast" else snr
    ok = ~np.isnan(score)
    if not ok.any():
        raise SelectionError("no candidate alpha produced a usable fit")
    # argmax with ties to the smaller alpha (grid is ascending)
    best = int(np.flatnonzero(ok)[np.argmax(score[ok])])
    return AlphaPath(grid, contrast, snr, float(grid[best]), ceiling)


def select_alpha(
    sample, params: RegParams = RegParams(), alpha_grid=DEFAULT_ALPHA_GRID, criterion: str = "contrast"
) -> float:
    """Pick the Tikhonov parameter from a geometric grid.

    For each candidate up to :func:`alpha_ceiling` a short robust fit (the
    deterministic start plus one random start, at most 20 C-steps) is scored
    and the maximizer returned, ties going to the smaller alpha.

    ``criterion="contrast"`` (default) scores the fit by
    :func:`outlyingness_contrast`. ``criterion="snr"`` uses
    :func:`standardized_snr`; on the h-subset the standardized spectrum is
    ``1`` for the leading ``k`` components and ``lam^2 / (lam + alpha)^2``
    beyond, so this ratio grows with alpha and tends to select the largest
    scored candidate.
    """
    grid = list(alpha_grid)
    if len(grid) == 1:
        if not grid[0] > 0:
            raise ArgumentError("alpha candidates must be positive")
        return float(grid[0])
    return alpha_path(sample, params, grid, criterion).selected
