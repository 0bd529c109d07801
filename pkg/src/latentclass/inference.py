"""Parameter inference for the latent GP: priors, pseudo-marginal random-walk
Metropolis-Hastings, exact-sign ABC rejection, MAP extraction and chain
diagnostics.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .core_gp import GpParams, MeanBasis, NumericalError, basis_for, build_cov, mean_vector, sq_dist
from .design import LabelledDesign
from .orthant import DEFAULT_MH_REPLICATES, orthant_log_likelihood
from .sampler import reorder_for_boundary

log = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)
TARGET_ACCEPT = 0.3


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors: Gaussian per beta component, inverse-gamma on sigma2 and delta."""

    beta_mean: tuple
    beta_sd: tuple
    sigma2_shape: float = 3.0
    sigma2_scale: float = 2.0
    delta_shape: float = 3.0
    delta_scale: float = 0.5
    intercept_tight: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beta_mean", tuple(float(v) for v in np.atleast_1d(self.beta_mean)))
        object.__setattr__(self, "beta_sd", tuple(float(v) for v in np.atleast_1d(self.beta_sd)))
        if len(self.beta_mean) != len(self.beta_sd):
            raise ValueError("beta_mean and beta_sd lengths differ")
        vals = (*self.beta_sd, self.sigma2_shape, self.sigma2_scale, self.delta_shape, self.delta_scale)
        if not all(v > 0 for v in vals):
            raise ValueError("prior sd, shape and scale values must be positive")

    @property
    def basis_dim(self) -> int:
        return len(self.beta_mean)

    def sigma2_mean(self) -> float:
        return invgamma_mean(self.sigma2_shape, self.sigma2_scale)

    def delta_mean(self) -> float:
        return invgamma_mean(self.delta_shape, self.delta_scale)


def invgamma_mean(shape, scale):
    return scale / (shape - 1) if shape > 1 else np.inf


def invgamma_var(shape, scale):
    return scale**2 / ((shape - 1) ** 2 * (shape - 2)) if shape > 2 else np.inf


def log_invgamma(x, shape, scale):
    if not x > 0:
        return -np.inf
    return shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def log_normal(x, mean, sd):
    z = (np.asarray(x) - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI


def median_distance(design: LabelledDesign) -> float:
    D = np.sqrt(sq_dist(design.scaled(), design.scaled()))
    iu = np.triu_indices(design.n, k=1)
    return float(np.median(D[iu])) if iu[0].size else 1.0


def default_priors(design: LabelledDesign, basis=MeanBasis.LINEAR, intercept_tight=False,
                   shape: float = 3.0, beta_sd: float = 3.0, intercept_sd: float = 0.1) -> PriorSpec:
    """Weakly informative defaults on scaled inputs.

    Inverse-gamma shapes are 3; scales put the prior mean of sigma2 at 1 and
    the prior mean of delta at the squared median inter-point distance.
    """
    p = MeanBasis(basis).output_dim(design.dim)
    sd = [beta_sd] * p
    if intercept_tight:
        sd[0] = intercept_sd
    m = median_distance(design)
    return PriorSpec(
        beta_mean=(0.0,) * p,
        beta_sd=tuple(sd),
        sigma2_shape=shape,
        sigma2_scale=(shape - 1) * 1.0,
        delta_shape=shape,
        delta_scale=(shape - 1) * m * m,
        intercept_tight=intercept_tight,
    )


def log_prior(params: GpParams, priors: PriorSpec) -> float:
    if len(params.beta) != priors.basis_dim:
        raise ValueError(f"beta has length {len(params.beta)}, priors expect {priors.basis_dim}")
    lp = log_invgamma(params.sigma2, priors.sigma2_shape, priors.sigma2_scale)
    lp += log_invgamma(params.delta, priors.delta_shape, priors.delta_scale)
    lp += float(np.sum(log_normal(params.beta, np.array(priors.beta_mean), np.array(priors.beta_sd))))
    return float(lp)


@dataclass(frozen=True)
class MhConfig:
    n_iterations: int = 20_000
    burn_in: int = 5_000
    thin: int = 5
    step_sizes: tuple | None = None  # per beta component, then log sigma2, log delta
    adapt_window: int = 100
    likelihood_replicates: int = DEFAULT_MH_REPLICATES
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be positive")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.adapt_window < 0:
            raise ValueError("adapt_window must be >= 0")
        if self.likelihood_replicates < 1:
            raise ValueError("likelihood_replicates must be >= 1")
        if self.step_sizes is not None:
            steps = tuple(float(s) for s in self.step_sizes)
            if not all(s > 0 for s in steps):
                raise ValueError("step sizes must be positive")
            object.__setattr__(self, "step_sizes", steps)

    @property
    def n_draws(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass
class Chain:
    """Post-burn-in, thinned MH draws."""

    beta: np.ndarray
    sigma2: np.ndarray
    delta: np.ndarray
    log_posterior: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float
    config_echo: MhConfig = field(default_factory=MhConfig)
    final_step_sizes: np.ndarray | None = None

    def __len__(self):
        return self.sigma2.size

    def params(self, i: int) -> GpParams:
        return GpParams(self.beta[i], self.sigma2[i], self.delta[i])

    def param_draws(self) -> list[GpParams]:
        return [self.params(i) for i in range(len(self))]

    def map_params(self) -> GpParams:
        return map_estimate(self)

    def as_matrix(self) -> tuple[np.ndarray, list[str]]:
        names = [f"beta_{k}" for k in range(self.beta.shape[1])] + ["sigma2", "delta"]
        return np.column_stack([self.beta, self.sigma2, self.delta]), names

    def to_csv(self, path=None) -> str:
        M, names = self.as_matrix()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + ["log_posterior", "accepted"])
        for row, lp, acc in zip(M, self.log_posterior, self.accepted):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lp)), int(acc)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Chain":
        text = path_or_text if "\n" in str(path_or_text) else Path(path_or_text).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        p = sum(h.startswith("beta_") for h in header)
        acc = body[:, -1].astype(bool)
        return cls(
            beta=body[:, :p], sigma2=body[:, p], delta=body[:, p + 1],
            log_posterior=body[:, p + 2], accepted=acc,
            acceptance_rate=float(acc.mean()) if acc.size else 0.0,
        )


def _initial_state(priors: PriorSpec) -> GpParams:
    return GpParams(np.array(priors.beta_mean), priors.sigma2_mean(), priors.delta_mean())


def mh_run(design: LabelledDesign, priors: PriorSpec, config: MhConfig = MhConfig(),
           use_likelihood: bool = True, initial: GpParams | None = None) -> Chain:
    """Random-walk Metropolis-Hastings on ``(beta, log sigma2, log delta)``.

    The GHK likelihood is noisy, so this is pseudo-marginal MH: the estimate
    made when a state is accepted is kept with it and never refreshed. Step
    sizes adapt during burn-in only (toward 30% acceptance) and are frozen
    afterwards. ``use_likelihood=False`` samples the prior, which is how the
    proposal and Jacobian terms are checked.
    """
    if design.n < 1:
        raise ValueError("design is empty")
    basis_for(np.zeros(priors.basis_dim), design.dim)
    p = priors.basis_dim
    if config.step_sizes is None:
        steps = np.full(p + 2, 0.5)
    else:
        steps = np.asarray(config.step_sizes, dtype=float)
        if steps.size != p + 2:
            raise ValueError(f"need {p + 2} step sizes, got {steps.size}")

    ss = np.random.SeedSequence(config.seed)
    prop_rng, lik_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    order = reorder_for_boundary(design).permutation

    def loglik(theta: GpParams) -> float:
        if not use_likelihood:
            return 0.0
        est = orthant_log_likelihood(design, theta, config.likelihood_replicates, lik_rng, order)
        return est.log_value

    theta = initial if initial is not None else _initial_state(priors)
    cur_ll = loglik(theta)
    cur_lp = log_prior(theta, priors)
    state = np.concatenate([theta.beta, [np.log(theta.sigma2), np.log(theta.delta)]])
    cur_target = cur_ll + cur_lp + state[-2] + state[-1]

    n_keep = config.n_draws
    out_state = np.empty((n_keep, p + 2))
    out_lpost = np.empty(n_keep)
    out_acc = np.zeros(n_keep, dtype=bool)
    log_scale = 0.0
    batch_acc, batch_idx, n_acc_post = 0, 0, 0
    kept = 0
    noise = prop_rng.standard_normal((config.n_iterations, p + 2))
    log_u = np.log(prop_rng.random(config.n_iterations))

    for t in range(config.n_iterations):
        prop = state + np.exp(log_scale) * steps * noise[t]
        accepted = False
        if np.all(np.isfinite(prop)) and prop[-2] < 700 and prop[-1] < 700:
            cand = GpParams(prop[:p], np.exp(prop[-2]), np.exp(prop[-1]))
            lp = log_prior(cand, priors)
            if np.isfinite(lp):
                ll = loglik(cand)
                target = ll + lp + prop[-2] + prop[-1]
                if np.isfinite(target) and log_u[t] < target - cur_target:
                    accepted = True
                    state, cur_target, cur_ll, cur_lp = prop, target, ll, lp
        if t < config.burn_in:
            if config.adapt_window:
                batch_acc += accepted
                if (t + 1) % config.adapt_window == 0:
                    rate = batch_acc / config.adapt_window
                    batch_idx += 1
                    log_scale += (rate - TARGET_ACCEPT) * 2.0 / np.sqrt(batch_idx)
                    batch_acc = 0
            continue
        n_acc_post += accepted
        if (t - config.burn_in + 1) % config.thin == 0 and kept < n_keep:
            out_state[kept] = state
            out_lpost[kept] = cur_ll + cur_lp
            out_acc[kept] = accepted
            kept += 1

    n_post = config.n_iterations - config.burn_in
    rate = n_acc_post / n_post if n_post else 0.0
    if rate == 0:
        log.warning("MH chain rejected every proposal after burn-in; widen priors or check labels")
    return Chain(
        beta=out_state[:, :p].copy(),
        sigma2=np.exp(out_state[:, p]),
        delta=np.exp(out_state[:, p + 1]),
        log_posterior=out_lpost,
        accepted=out_acc,
        acceptance_rate=float(rate),
        config_echo=config,
        final_step_sizes=np.exp(log_scale) * steps,
    )


@dataclass(frozen=True)
class AbcResult:
    accepted: list
    n_proposals: int

    @property
    def acceptance_fraction(self) -> float:
        return len(self.accepted) / self.n_proposals if self.n_proposals else 0.0

    def __len__(self):
        return len(self.accepted)

    def __iter__(self):
        return iter(self.accepted)


def sample_prior(priors: PriorSpec, rng) -> GpParams:
    beta = rng.normal(priors.beta_mean, priors.beta_sd)
    sigma2 = priors.sigma2_scale / rng.gamma(priors.sigma2_shape)
    delta = priors.delta_scale / rng.gamma(priors.delta_shape)
    return GpParams(beta, sigma2, delta)


def abc_fit(design: LabelledDesign, priors: PriorSpec, n_proposals: int, seed=None) -> AbcResult:
    """Exact-sign ABC: keep a prior draw iff one simulated latent vector matches every label."""
    rng = np.random.default_rng(seed)
    X = design.scaled()
    basis = basis_for(np.zeros(priors.basis_dim), design.dim)
    accepted = []
    for _ in range(n_proposals):
        theta = sample_prior(priors, rng)
        z = rng.standard_normal(design.n)
        try:
            L = build_cov(X, theta).chol
        except NumericalError:
            continue
        eta = mean_vector(X, basis, theta.beta) + L @ z
        if np.all(np.sign(eta) == design.labels):
            accepted.append(theta)
    return AbcResult(accepted, n_proposals)


def map_estimate(chain: Chain) -> GpParams:
    """Draw with the largest stored log-posterior; the earliest wins ties."""
    if len(chain) == 0:
        raise ValueError("chain is empty")
    return chain.params(int(np.argmax(chain.log_posterior)))


def effective_sample_size(x) -> float:
    """Autocorrelation ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    xc = x - x.mean()
    var = xc @ xc / n
    if var <= 1e-300 * max(1.0, float(np.abs(x).max()) ** 2):
        return 1.0
    m = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / max(tau, 1e-12))


def chain_diagnostics(chain: Chain) -> dict:
    """Per-parameter mean, sd, ESS and split-half mean discrepancy (in sd units)."""
    if len(chain) == 0:
        raise ValueError("chain is empty")
    M, names = chain.as_matrix()
    out = {}
    half = len(chain) // 2
    for j, name in enumerate(names):
        x = M[:, j]
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        if half >= 1 and sd > 0:
            split = float((x[:half].mean() - x[half:].mean()) / sd)
        else:
            split = 0.0
        out[name] = {
            "mean": float(x.mean()),
            "sd": sd,
            "ess": effective_sample_size(x),
            "split_half_z": split,
        }
    out["acceptance_rate"] = chain.acceptance_rate
    out["n_draws"] = len(chain)
    return out
