"""Robust principal component analysis for samples of densities.

Densities are handled through the centered log-ratio (clr) transform on a
shared equidistant grid. The robust fit trims to the ``h`` curves with the
smallest regularized Mahalanobis distances, iterating concentration steps,
and calibrates the trimmed covariance against the Gaussian limiting law of
those distances.
"""

from .bayes import (
    ClrCurve,
    DensityCurve,
    Grid,
    bayes_inner,
    bayes_mean,
    clr_transform,
    inv_clr,
    perturb,
    power,
)
from .errors import (
    ArgumentError,
    ConvergenceError,
    DegenerateSubsetError,
    DomainError,
    FitError,
    NumericError,
    RangeError,
    RdpcaError,
    SelectionError,
    ShapeError,
    TieError,
)
from .fit import RdpcaFit, alpha_path, c_step, fit, scale_fixed_point, select_alpha, sfpca
from .mahalanobis import DistanceReport, RegParams, alpha_md, cutoff, limiting_draws, rdmd_squared, truncated_md
from .metrics import explained_variance, ise, mean_cosine, tpr_tnr
from .simgen import LabeledSample, gaussian_kde, gen_model1, gen_model2, generate, mc_true_cov
from .spectral import ClrSample, SpectralModel, eig_sym, standardize, trimmed_cov

__version__ = "0.1.0"
