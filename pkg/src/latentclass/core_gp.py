"""Gaussian-process primitives: mean basis, squared-exponential correlation,
covariance assembly and exact Gaussian conditioning.

The correlation is ``c(a, b) = exp(-|a - b|^2 / delta)``: ``delta`` is in
squared-distance units and is neither halved nor squared.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class NumericalError(RuntimeError):
    """Raised when a covariance cannot be factorised or a conditional is degenerate."""


class MeanBasis(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"

    def output_dim(self, d: int) -> int:
        return 1 if self is MeanBasis.CONSTANT else d + 1

    def evaluate(self, points) -> np.ndarray:
        """Basis matrix ``H`` with one row ``h(x)`` per point."""
        X = as_points(points)
        ones = np.ones((X.shape[0], 1))
        if self is MeanBasis.CONSTANT:
            return ones
        return np.hstack([ones, X])


@dataclass(frozen=True)
class GpParams:
    """Latent GP parameters ``(beta, sigma2, delta)``."""

    beta: np.ndarray
    sigma2: float
    delta: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "delta", float(self.delta))
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    def __eq__(self, other):
        if not isinstance(other, GpParams):
            return NotImplemented
        return (
            np.array_equal(self.beta, other.beta)
            and self.sigma2 == other.sigma2
            and self.delta == other.delta
        )

    def __hash__(self):
        return hash((self.beta.tobytes(), self.sigma2, self.delta))


@dataclass(frozen=True)
class CovMatrix:
    entries: np.ndarray
    jitter: float
    chol: np.ndarray  # lower triangular factor of ``entries``


def as_points(points) -> np.ndarray:
    """Coerce a point or list of points to a ``(n, d)`` float array."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"points must be at most 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain non-finite coordinates")
    return X


def sq_exp_corr(a, b, delta: float) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return float(np.exp(-np.sum((a - b) ** 2) / delta))


def sq_dist(X1, X2) -> np.ndarray:
    X1, X2 = as_points(X1), as_points(X2)
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(f"dimension mismatch: {X1.shape[1]} vs {X2.shape[1]}")
    D = np.zeros((X1.shape[0], X2.shape[0]))
    for k in range(X1.shape[1]):
        D += (X1[:, k, None] - X2[None, :, k]) ** 2
    return D


def corr_matrix(X1, X2, delta: float) -> np.ndarray:
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return np.exp(-sq_dist(X1, X2) / delta)


def mean_vector(points, basis: MeanBasis, beta) -> np.ndarray:
    H = MeanBasis(basis).evaluate(points)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (H.shape[1],):
        raise ValueError(
            f"beta has length {beta.size}, basis {MeanBasis(basis).value} needs {H.shape[1]}"
        )
    return H @ beta


def basis_for(beta, d: int) -> MeanBasis:
    p = np.atleast_1d(beta).size
    if p == 1:
        return MeanBasis.CONSTANT
    if p == d + 1:
        return MeanBasis.LINEAR
    raise ValueError(f"beta of length {p} fits no basis in dimension {d}")


def _jitter_schedule(jitter: float | None, sigma2: float):
    if jitter is not None:
        yield float(jitter)
    level = JITTER_START
    while level <= JITTER_MAX * (1 + 1e-9):
        if jitter is None or level * sigma2 > jitter:
            yield level * sigma2
        level *= 10


def factorize(K: np.ndarray, sigma2: float, jitter: float | None = None) -> CovMatrix:
    """Cholesky-factorise ``K + jitter I``, escalating jitter by 10x on failure."""
    n = K.shape[0]
    last = None
    for jit in _jitter_schedule(jitter, sigma2):
        A = K + jit * np.eye(n) if jit else K.copy()
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            last = jit
            continue
        if np.all(np.isfinite(L)):
            return CovMatrix(entries=A, jitter=jit, chol=L)
        last = jit
    raise NumericalError(f"covariance not positive definite; final jitter tried {last:.3g}")


def build_cov(points, params: GpParams, jitter: float | None = None) -> CovMatrix:
    """Covariance ``sigma2 * c(x_i, x_j) + jitter * 1{i=j}`` and its factor.

    With ``jitter=None`` the first attempt uses ``1e-8 * sigma2``.
    """
    X = as_points(points)
    if X.shape[0] < 1:
        raise ValueError("need at least one point")
    K = params.sigma2 * corr_matrix(X, X, params.delta)
    return factorize(K, params.sigma2, jitter)


def conditional_normal(joint_mean, joint_cov, observed_idx, observed_vals, target_idx):
    """Condition a joint Gaussian on observed coordinates.

    Returns the mean vector and covariance matrix of the ``target_idx``
    coordinates given ``y[observed_idx] = observed_vals``.
    """
    mu = np.asarray(joint_mean, dtype=float)
    S = np.asarray(joint_cov, dtype=float)
    oi = np.atleast_1d(np.asarray(observed_idx, dtype=int))
    ti = np.atleast_1d(np.asarray(target_idx, dtype=int))
    if np.intersect1d(oi, ti).size:
        raise ValueError("observed and target index sets overlap")
    yo = np.atleast_1d(np.asarray(observed_vals, dtype=float))
    if yo.shape != oi.shape:
        raise ValueError("observed_vals length does not match observed_idx")
    if oi.size == 0:
        return mu[ti].copy(), S[np.ix_(ti, ti)].copy()
    Soo = S[np.ix_(oi, oi)]
    Sto = S[np.ix_(ti, oi)]
    try:
        cf = linalg.cho_factor(Soo, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("observed covariance block is singular") from exc
    mean = mu[ti] + Sto @ linalg.cho_solve(cf, yo - mu[oi])
    cov = S[np.ix_(ti, ti)] - Sto @ linalg.cho_solve(cf, Sto.T)
    cov = 0.5 * (cov + cov.T)
    if np.any(np.diag(cov) <= 0):
        raise NumericalError("conditional variance is not positive")
    return mean, cov
