"""Vectorised GHK sweep shared by the likelihood estimator and the latent sampler."""

import numpy as np
from scipy.special import log_ndtr, ndtri_exp


def _truncated_step(c, diag, sign, u_log):
    """Half-line log-mass and standardized truncated draw for one coordinate.

    ``c`` is the conditional mean, ``diag`` the conditional sd; ``u_log`` is
    ``log(u)`` with ``u`` uniform on (0, 1].
    """
    t = -c / diag
    if sign < 0:
        lp = log_ndtr(t)
        z = ndtri_exp(u_log + lp)
        z = np.where(np.isfinite(z), np.minimum(z, t), t)
    else:
        lp = log_ndtr(-t)
        z = -ndtri_exp(u_log + lp)
        z = np.where(np.isfinite(z), np.maximum(z, t), t)
    return lp, z


def ghk_sweep(mean, chol, signs, rng, n_rep: int):
    """Run ``n_rep`` GHK replicates in the order of the given arrays.

    Returns ``(eta, log_w, step_logp)``: sign-consistent latent draws
    ``(n_rep, n)``, per-replicate log orthant weights and the per-step log
    half-line masses ``(n_rep, n)``.
    """
    mean = np.asarray(mean, dtype=float)
    L = np.asarray(chol, dtype=float)
    n = mean.size
    U = rng.random((n_rep, n))
    Z = np.zeros((n_rep, n))
    eta = np.empty((n_rep, n))
    step_logp = np.empty((n_rep, n))
    for k in range(n):
        c = mean[k] + Z[:, :k] @ L[k, :k]
        lp, z = _truncated_step(c, L[k, k], signs[k], np.log1p(-U[:, k]))
        Z[:, k] = z
        eta[:, k] = c + L[k, k] * z
        step_logp[:, k] = lp
    return eta, step_logp.sum(axis=1), step_logp
