"""Sign-consistent latent GP draws at the design points.

The default ``"exact"`` method draws i.i.d. from the latent GP conditioned on
every sign (tilted sequential proposals plus accept/reject). The
``"sequential"`` method visits points boundary-first and truncates each
univariate conditional to the label's half-line, sampled by inverse CDF; its
draws are sign-consistent but not distributed as the conditioned GP, and
depend on the visiting order. ``"rejection"`` is the same sequential scheme
with a literal resample-until-valid loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._ghk import ghk_sweep
from ._tilted import TiltedOrthantSampler
from .core_gp import GpParams, basis_for, build_cov, mean_vector, sq_dist
from .design import LabelledDesign

log = logging.getLogger(__name__)

MIN_HALFLINE_MASS = 1e-300
FAILURE_BUDGET = 0.10
METHODS = ("exact", "sequential", "rejection")


class DegenerateSampleError(RuntimeError):
    """The conditional half-line mass at some point is numerically zero."""

    def __init__(self, point_index: int | None, log_mass: float, detail: str | None = None):
        self.point_index = point_index
        self.log_mass = log_mass
        if detail is None:
            detail = (f"half-line mass at design point {point_index} is exp({log_mass:.4g}) "
                      f"< {MIN_HALFLINE_MASS:g}; parameters are incompatible with the labels")
        super().__init__(detail)


@dataclass(frozen=True)
class OrderingPlan:
    permutation: np.ndarray
    rationale_scores: np.ndarray

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.permutation.size)
        return inv


@dataclass(frozen=True)
class LatentSample:
    values: np.ndarray
    params_used: GpParams
    seed_used: object = None


def reorder_for_boundary(design: LabelledDesign) -> OrderingPlan:
    """Sort points by distance to the nearest opposite-label point (ties keep index order)."""
    n = design.n
    if design.single_class:
        log.warning("single-class design: boundary-first ordering is the identity")
        return OrderingPlan(np.arange(n), np.full(n, np.inf))
    D = sq_dist(design.scaled(), design.scaled())
    opposite = design.labels[:, None] != design.labels[None, :]
    score = np.sqrt(np.where(opposite, D, np.inf).min(axis=1))
    perm = np.lexsort((np.arange(n), score))
    return OrderingPlan(perm, score)


def orthant_sampler(design: LabelledDesign, params: GpParams) -> TiltedOrthantSampler:
    """Exact sampler for the latent vector at the design points, in design order."""
    X = design.scaled()
    cov = build_cov(X, params)
    mu = mean_vector(X, basis_for(params.beta, design.dim), params.beta)
    return TiltedOrthantSampler(mu, cov.entries, design.labels)


def _check_draws(eta, step_logp, signs, perm, raise_on_degenerate):
    bad = (step_logp < np.log(MIN_HALFLINE_MASS)) | (np.sign(eta) != signs)
    if bad.any():
        if raise_on_degenerate:
            r, k = np.argwhere(bad)[0]
            raise DegenerateSampleError(int(perm[k]), float(step_logp[r, k]))
        eta = eta.copy()
        eta[bad.any(axis=1)] = np.nan
    return eta


def draw_latent(design: LabelledDesign, params: GpParams, plan: OrderingPlan, rng,
                n_draws: int, raise_on_degenerate: bool = True, method: str = "exact",
                sampler: TiltedOrthantSampler | None = None) -> np.ndarray:
    """``n_draws`` sign-consistent latent vectors ``(n_draws, n)`` in design order.

    ``plan`` sets the visiting order of the ``"sequential"`` method; the exact
    method's output does not depend on it. Degenerate draws raise
    :class:`DegenerateSampleError`, or come back as NaN rows when
    ``raise_on_degenerate`` is false.
    """
    if method == "exact":
        sampler = orthant_sampler(design, params) if sampler is None else sampler
        try:
            eta, step_logp = sampler.sample(rng, n_draws)
        except RuntimeError as exc:
            if raise_on_degenerate:
                raise DegenerateSampleError(None, -np.inf, str(exc)) from exc
            return np.full((n_draws, design.n), np.nan)
        return _check_draws(eta, step_logp, design.labels, np.arange(design.n), raise_on_degenerate)
    if method != "sequential":
        raise ValueError(f"draw_latent method must be 'exact' or 'sequential', got {method!r}")
    perm = plan.permutation
    X = design.scaled()[perm]
    signs = design.labels[perm]
    cov = build_cov(X, params)
    mu = mean_vector(X, basis_for(params.beta, design.dim), params.beta)
    eta, _, step_logp = ghk_sweep(mu, cov.chol, signs, rng, n_draws)
    eta = _check_draws(eta, step_logp, signs, perm, raise_on_degenerate)
    out = np.empty_like(eta)
    out[:, perm] = eta
    return out


def _rejection_draw(design, params, plan, rng, max_tries=1_000_000):
    """Resample each point from its conditional until the sign agrees."""
    perm = plan.permutation
    X = design.scaled()[perm]
    signs = design.labels[perm]
    L = build_cov(X, params).chol
    mu = mean_vector(X, basis_for(params.beta, design.dim), params.beta)
    n = mu.size
    z = np.zeros(n)
    eta = np.empty(n)
    for k in range(n):
        c = mu[k] + L[k, :k] @ z[:k]
        for _ in range(max_tries):
            zk = rng.standard_normal()
            if np.sign(c + L[k, k] * zk) == signs[k]:
                break
        else:
            raise DegenerateSampleError(int(perm[k]), -np.inf)
        z[k] = zk
        eta[k] = c + L[k, k] * zk
    out = np.empty(n)
    out[perm] = eta
    return out


def sequential_sign_sample(design: LabelledDesign, params: GpParams, plan: OrderingPlan | None = None,
                           seed=None, method: str = "exact",
                           sampler: TiltedOrthantSampler | None = None) -> LatentSample:
    """One latent draw whose sign matches every label.

    ``method`` is ``"exact"`` (default), ``"sequential"`` or ``"rejection"``;
    see the module docstring. ``sampler`` reuses a prepared exact sampler for
    the same design and parameters.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    plan = reorder_for_boundary(design) if plan is None else plan
    rng = np.random.default_rng(seed)
    if method == "rejection":
        values = _rejection_draw(design, params, plan, rng)
    else:
        values = draw_latent(design, params, plan, rng, 1, method=method, sampler=sampler)[0]
    values.setflags(write=False)
    return LatentSample(values, params, seed)


def latent_ensemble(design: LabelledDesign, source, n_samples: int, seed=None,
                    from_chain: bool = False, plan: OrderingPlan | None = None,
                    method: str = "exact") -> list[LatentSample]:
    """Draw ``n_samples`` latent samples, each with its own sub-seed.

    ``source`` is a :class:`GpParams` or a chain. Chains contribute their MAP
    unless ``from_chain`` is set, in which case draws are spread evenly over
    the stored (thinned) chain.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if isinstance(source, GpParams):
        param_list = [source] * n_samples
    elif from_chain:
        draws = source.param_draws()
        idx = np.linspace(0, len(draws) - 1, n_samples).round().astype(int)
        param_list = [draws[i] for i in idx]
    else:
        param_list = [source.map_params()] * n_samples
    plan = reorder_for_boundary(design) if plan is None else plan
    children = np.random.SeedSequence(seed).spawn(n_samples)
    samplers: dict = {}
    out, failures = [], 0
    for params, child in zip(param_list, children):
        try:
            sampler = None
            if method == "exact":
                if params not in samplers:
                    samplers[params] = orthant_sampler(design, params)
                sampler = samplers[params]
            out.append(sequential_sign_sample(design, params, plan, child, method, sampler))
        except DegenerateSampleError as exc:
            failures += 1
            log.warning("skipping latent draw: %s", exc)
            if failures > FAILURE_BUDGET * n_samples:
                raise
    return out
