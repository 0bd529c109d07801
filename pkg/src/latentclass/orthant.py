"""Sign-constraint (orthant) likelihood of a latent Gaussian vector.

The probability that ``eta`` is negative at every region-1 point and positive
at every region-2 point is estimated with the GHK sequential-conditioning
estimator: points are visited in a fixed order, each contributes the normal
mass of the half-line matching its label given the values already drawn, and
a truncated value is then drawn from that half-line by inverse CDF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from ._ghk import ghk_sweep
from .core_gp import GpParams, NumericalError, basis_for, build_cov, mean_vector
from .design import LabelledDesign
from .sampler import reorder_for_boundary

DEFAULT_MH_REPLICATES = 64
DEFAULT_REPORT_REPLICATES = 4096


@dataclass(frozen=True)
class LikelihoodEstimate:
    log_value: float
    mc_std_error: float
    n_replicates: int
    degenerate: bool = False

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


def phi_halfline(mean: float, sd: float, sign: int) -> float:
    """Normal mass of the half-line ``(-inf, 0)`` (sign -1) or ``(0, inf)`` (sign +1)."""
    if not sd > 0:
        raise ValueError(f"sd must be positive, got {sd}")
    if sign not in (-1, 1):
        raise ValueError(f"sign must be -1 or +1, got {sign}")
    return float(ndtr(-mean / sd) if sign < 0 else ndtr(mean / sd))


def _summarize(log_w: np.ndarray) -> LikelihoodEstimate:
    R = log_w.size
    if not np.any(np.isfinite(log_w)):
        return LikelihoodEstimate(-np.inf, 0.0, R, degenerate=True)
    log_mean = float(logsumexp(log_w) - np.log(R))
    if R > 1:
        rel = np.exp(log_w - log_mean)
        se = float(np.exp(log_mean) * np.std(rel, ddof=1) / np.sqrt(R))
    else:
        se = float("inf")
    return LikelihoodEstimate(min(log_mean, 0.0), se, R)


def orthant_probability(mean, cov, signs, n_replicates=DEFAULT_REPORT_REPLICATES, rng=None,
                        order=None) -> LikelihoodEstimate:
    """GHK estimate of ``P(sign(eta_i) = signs_i for all i)`` for ``eta ~ N(mean, cov)``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    signs = np.asarray(signs, dtype=int)
    order = np.arange(mean.size) if order is None else np.asarray(order)
    L = np.linalg.cholesky(cov[np.ix_(order, order)])
    rng = np.random.default_rng(rng)
    _, log_w, _ = ghk_sweep(mean[order], L, signs[order], rng, int(n_replicates))
    return _summarize(log_w)


def orthant_log_likelihood(design: LabelledDesign, params: GpParams,
                           n_replicates: int = DEFAULT_REPORT_REPLICATES, rng_seed=None,
                           order=None) -> LikelihoodEstimate:
    """Log of the GHK-estimated probability that the latent GP matches every label.

    ``order`` is the traversal permutation (defaults to the boundary-first
    ordering of the design). ``rng_seed`` may be an int or a Generator.
    A covariance that cannot be factorised gives a degenerate ``-inf`` estimate.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    if order is None:
        order = reorder_for_boundary(design).permutation
    X = design.scaled()[order]
    basis = basis_for(params.beta, design.dim)
    try:
        cov = build_cov(X, params)
    except NumericalError:
        return LikelihoodEstimate(-np.inf, 0.0, int(n_replicates), degenerate=True)
    mu = mean_vector(X, basis, params.beta)
    rng = np.random.default_rng(rng_seed)
    _, log_w, _ = ghk_sweep(mu, cov.chol, design.labels[order], rng, int(n_replicates))
    return _summarize(log_w)
