"""Independent reference computations used by the tests."""

from __future__ import annotations

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import ndtr


def std_normal_cdf(x: float) -> float:
    """High-precision standard normal cdf via mpmath's erfc."""
    with mpmath.workdps(40):
        return float(mpmath.ncdf(x))


def _positive_orthant(mean, cov) -> float:
    """P(z > 0) for z ~ N(mean, cov), n <= 3, by nested adaptive quadrature."""
    n = len(mean)
    if n == 1:
        return float(ndtr(mean[0] / np.sqrt(cov[0, 0])))
    s11 = cov[0, 0]
    gain = cov[1:, 0] / s11
    rest_cov = cov[1:, 1:] - np.outer(cov[1:, 0], cov[0, 1:]) / s11
    sd = np.sqrt(s11)

    def integrand(z1):
        dens = np.exp(-0.5 * ((z1 - mean[0]) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
        if dens == 0.0:
            return 0.0
        return dens * _positive_orthant(mean[1:] + gain * (z1 - mean[0]), rest_cov)

    lo, hi = 0.0, max(mean[0] + 12 * sd, 12 * sd)
    val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


def orthant_quadrature(mean, cov, signs) -> float:
    """P(sign(eta_i) = signs_i for all i), eta ~ N(mean, cov), n <= 3."""
    s = np.asarray(signs, dtype=float)
    m = s * np.asarray(mean, dtype=float)
    C = np.asarray(cov, dtype=float) * np.outer(s, s)
    return _positive_orthant(m, C)


def bivariate_orthant(rho: float) -> float:
    """P(eta_1 < 0, eta_2 < 0) for standard bivariate normal with correlation rho."""
    return 0.25 + np.arcsin(rho) / (2 * np.pi)


def joint_rejection(mean, cov, signs, n_draws: int, rng) -> np.ndarray:
    """Draw from N(mean, cov) and keep only sign-consistent draws."""
    s = np.asarray(signs)
    out = []
    total = 0
    while total < n_draws:
        Z = rng.multivariate_normal(mean, cov, size=max(4 * n_draws, 1000))
        keep = Z[np.all(np.sign(Z) == s, axis=1)]
        out.append(keep)
        total += keep.shape[0]
    return np.concatenate(out)[:n_draws]
