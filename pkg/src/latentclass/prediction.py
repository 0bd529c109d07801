"""Class-probability prediction, boundary extraction, input transformation and
leave-one-out misclassification rates.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .core_gp import GpParams, MeanBasis, as_points, basis_for, build_cov, corr_matrix, mean_vector, sq_dist
from .design import LabelledDesign, ScaleInfo
from .inference import MhConfig, PriorSpec, default_priors, map_estimate, mh_run
from .sampler import LatentSample, draw_latent, reorder_for_boundary

log = logging.getLogger(__name__)

COINCIDENT_TOL = 1e-20  # squared distance in scaled units
GRID_RES = 101


class BoundaryError(ValueError):
    pass


@dataclass(frozen=True)
class PredictiveSummary:
    point: np.ndarray
    latent_mean: float
    latent_sd: float
    p_region1: float

    @property
    def p_region2(self) -> float:
        return 1.0 - self.p_region1


@dataclass
class Predictions:
    """Array form of per-point predictive summaries."""

    points: np.ndarray
    latent_mean: np.ndarray
    latent_sd: np.ndarray
    p_region1: np.ndarray

    def __len__(self):
        return self.p_region1.size

    def __getitem__(self, i) -> PredictiveSummary:
        return PredictiveSummary(self.points[i], float(self.latent_mean[i]),
                                 float(self.latent_sd[i]), float(self.p_region1[i]))

    @property
    def p_region2(self) -> np.ndarray:
        return 1.0 - self.p_region1

    def predicted_labels(self) -> np.ndarray:
        return np.where(self.p_region1 > 0.5, -1, 1)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.points.shape[1]
        w.writerow([f"x{k + 1}" for k in range(d)] + ["latent_mean", "latent_sd", "p_region1"])
        for x, m, s, p in zip(self.points, self.latent_mean, self.latent_sd, self.p_region1):
            w.writerow([f"{v:.10g}" for v in x] + [f"{m:.10g}", f"{s:.10g}", f"{p:.10g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class BoundaryEstimate:
    dimension: int
    root: float | None = None
    credible_interval: tuple | None = None
    member_roots: np.ndarray | None = None
    polylines: list = field(default_factory=list)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.dimension == 1:
            w.writerow(["root", "lower", "upper"])
            lo, hi = self.credible_interval
            w.writerow([f"{self.root:.10g}", f"{lo:.10g}", f"{hi:.10g}"])
        else:
            w.writerow(["polyline_id", "vertex_index", "x1", "x2"])
            for pid, line in enumerate(self.polylines):
                for vi, (a, b) in enumerate(line):
                    w.writerow([pid, vi, f"{a:.10g}", f"{b:.10g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class MisclassificationReport:
    per_point_rate: np.ndarray
    n_resamples: int
    params: GpParams | None = None

    def to_csv(self, design: LabelledDesign, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point_index"] + [f"x{k + 1}" for k in range(design.dim)] + ["label", "rate"])
        for i, (x, y, r) in enumerate(zip(design.points, design.labels, self.per_point_rate)):
            w.writerow([i] + [f"{v:.10g}" for v in x] + [int(y), f"{r:.10g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def top_points(self, k: int = 2) -> np.ndarray:
        return np.argsort(-self.per_point_rate, kind="stable")[:k]


class _Conditioner:
    """GP conditioned on the design under one parameter set, reused across members."""

    def __init__(self, Xs: np.ndarray, params: GpParams):
        self.Xs = Xs
        self.params = params
        self.basis = basis_for(params.beta, Xs.shape[1])
        self.cf = (build_cov(Xs, params).chol, True)
        self.prior_mean = mean_vector(Xs, self.basis, params.beta)

    def weights(self, T: np.ndarray):
        """``A = K^-1 k(X, T)`` and conditional variances at ``T``."""
        Kxt = self.params.sigma2 * corr_matrix(self.Xs, T, self.params.delta)
        A = linalg.cho_solve(self.cf, Kxt)
        var = self.params.sigma2 - np.einsum("ij,ij->j", Kxt, A)
        return A, np.maximum(var, 0.0)

    def predict(self, T: np.ndarray, E: np.ndarray):
        """Conditional means ``(members, T)`` and sds ``(T,)`` given latent rows ``E``."""
        A, var = self.weights(T)
        m = mean_vector(T, self.basis, self.params.beta) + (E - self.prior_mean) @ A
        return m, np.sqrt(var)

    def predict_paired(self, T: np.ndarray, E: np.ndarray):
        """Member ``i`` predicts at ``T[i]`` only."""
        A, var = self.weights(T)
        m = mean_vector(T, self.basis, self.params.beta) + np.einsum("ij,ji->i", E - self.prior_mean, A)
        return m, np.sqrt(var)


def _group_members(ensemble):
    groups: dict = {}
    for i, s in enumerate(ensemble):
        groups.setdefault(s.params_used, []).append(i)
    return groups


def member_predictions(test_points, design: LabelledDesign, ensemble: list[LatentSample]):
    """Per-member conditional means, sds and region-1 probabilities at the test points.

    Test points coinciding with a design point get that member's latent value,
    zero sd and a probability fixed by the label.
    """
    if not ensemble:
        raise ValueError("ensemble is empty")
    Xs = design.scaled()
    T = design.scale.forward(test_points)
    M = np.empty((len(ensemble), T.shape[0]))
    S = np.empty_like(M)
    for params, idx in _group_members(ensemble).items():
        E = np.array([ensemble[i].values for i in idx])
        m, s = _Conditioner(Xs, params).predict(T, E)
        M[idx] = m
        S[idx] = s
    D = sq_dist(T, Xs)
    nearest = D.argmin(axis=1)
    hit = D[np.arange(T.shape[0]), nearest] <= COINCIDENT_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        P = ndtr(-M / S)
    P = np.where(S > 0, P, (M < 0).astype(float))
    if hit.any():
        cols = np.flatnonzero(hit)
        vals = np.array([s.values for s in ensemble])[:, nearest[cols]]
        M[:, cols] = vals
        S[:, cols] = 0.0
        P[:, cols] = (design.labels[nearest[cols]] < 0).astype(float)
    return M, S, P


def class_probability(test_points, design: LabelledDesign, ensemble: list[LatentSample],
                      params: GpParams | None = None) -> Predictions:
    """Ensemble-averaged probability of region 1 (negative latent) at each test point.

    Each member conditions the GP on its latent values; ``p_region1`` averages
    ``Phi(-m/s)`` over members and ``latent_sd`` combines the within-member
    and between-member spread. ``params`` overrides the members' own.
    """
    if params is not None:
        ensemble = [LatentSample(s.values, params, s.seed_used) for s in ensemble]
    T = as_points(test_points)
    M, S, P = member_predictions(T, design, ensemble)
    mean = M.mean(axis=0)
    sd = np.sqrt((S**2).mean(axis=0) + M.var(axis=0))
    sd = np.maximum(sd, np.finfo(float).tiny)
    return Predictions(T, mean, sd, np.clip(P.mean(axis=0), 0.0, 1.0))


def default_gap(design: LabelledDesign) -> tuple[float, float]:
    """Innermost interval between adjacent opposite-labelled points in 1d (first one found)."""
    if design.dim != 1:
        raise ValueError("default_gap is for 1d designs")
    order = np.argsort(design.points[:, 0], kind="stable")
    x, y = design.points[order, 0], design.labels[order]
    change = np.flatnonzero(y[1:] != y[:-1])
    if change.size == 0:
        raise BoundaryError("design has a single class; no boundary to locate")
    k = change[0]
    return float(x[k]), float(x[k + 1])


def boundary_1d(design: LabelledDesign, ensemble: list[LatentSample], search_interval=None,
                tol: float = 1e-4) -> BoundaryEstimate:
    """Root of ``p_region1(x) = 0.5`` by bisection, with a per-member credible interval.

    ``tol`` is in scaled units. The interval is the 2.5%-97.5% range of the
    per-member zero crossings of the conditional latent mean.
    """
    if design.dim != 1:
        raise ValueError("boundary_1d needs a 1d design")
    lo, hi = default_gap(design) if search_interval is None else map(float, search_interval)
    width = float(design.scale.width[0])
    xtol = tol * width

    def f(x):
        return class_probability([x], design, ensemble).p_region1[0] - 0.5

    flo, fhi = f(lo), f(hi)
    if np.sign(flo) == np.sign(fhi) or flo == 0 or fhi == 0:
        if flo == 0:
            root = lo
        elif fhi == 0:
            root = hi
        else:
            raise BoundaryError(f"p_region1 does not cross 0.5 on [{lo:g}, {hi:g}]")
    else:
        a, b = lo, hi
        while b - a > xtol:
            mid = 0.5 * (a + b)
            fm = f(mid)
            if np.sign(fm) == np.sign(flo):
                a, flo = mid, fm
            else:
                b = mid
        root = 0.5 * (a + b)

    roots = _member_roots(design, ensemble, lo, hi, xtol)
    if roots.size:
        ci = tuple(float(v) for v in np.quantile(roots, [0.025, 0.975]))
    else:
        ci = (root, root)
    return BoundaryEstimate(dimension=1, root=float(root), credible_interval=ci, member_roots=roots)


def _member_roots(design, ensemble, lo, hi, xtol) -> np.ndarray:
    Xs = design.scaled()
    out = np.full(len(ensemble), np.nan)
    for params, idx in _group_members(ensemble).items():
        E = np.array([ensemble[i].values for i in idx])
        cond = _Conditioner(Xs, params)
        k = len(idx)

        def g(x):
            return cond.predict_paired(design.scale.forward(x), E)[0]

        a = np.full(k, lo)
        b = np.full(k, hi)
        ga, gb = g(a), g(b)
        ok = np.sign(ga) != np.sign(gb)
        while np.max(b - a) > xtol:
            mid = 0.5 * (a + b)
            gm = g(mid)
            left = np.sign(gm) == np.sign(ga)
            a = np.where(left, mid, a)
            ga = np.where(left, gm, ga)
            b = np.where(left, b, mid)
        out[idx] = np.where(ok, 0.5 * (a + b), np.nan)
    return out[np.isfinite(out)]


# Marching squares: corner bits v00=1, v10=2, v11=4, v01=8; edges B, R, T, L.
_CASES = {
    1: [("L", "B")], 2: [("B", "R")], 3: [("L", "R")], 4: [("R", "T")],
    6: [("B", "T")], 7: [("L", "T")], 8: [("T", "L")], 9: [("B", "T")],
    11: [("R", "T")], 12: [("L", "R")], 13: [("B", "R")], 14: [("L", "B")],
}
_SADDLES = {
    5: ([("B", "R"), ("T", "L")], [("L", "B"), ("R", "T")]),
    10: ([("L", "B"), ("R", "T")], [("B", "R"), ("T", "L")]),
}


def marching_squares(xs, ys, Z, level: float = 0.5) -> list[np.ndarray]:
    """Level-set polylines of ``Z[i, j]`` sampled at ``(xs[i], ys[j])``.

    Vertices are linearly interpolated along cell edges. Saddle cells are
    resolved by the average of their four corners.
    """
    xs, ys, Z = np.asarray(xs, float), np.asarray(ys, float), np.asarray(Z, float)
    nx, ny = Z.shape
    if nx < 2 or ny < 2 or xs.size != nx or ys.size != ny:
        raise ValueError("grid must be at least 2x2 and match its coordinates")
    inside = Z > level

    def vertex(key):
        kind, i, j = key
        if kind == "h":
            va, vb = Z[i, j], Z[i + 1, j]
            t = (level - va) / (vb - va)
            return (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
        va, vb = Z[i, j], Z[i, j + 1]
        t = (level - va) / (vb - va)
        return (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))

    def edge_key(edge, i, j):
        return {"B": ("h", i, j), "T": ("h", i, j + 1), "L": ("v", i, j), "R": ("v", i + 1, j)}[edge]

    segments = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            case = (inside[i, j] * 1 | inside[i + 1, j] * 2
                    | inside[i + 1, j + 1] * 4 | inside[i, j + 1] * 8)
            if case in (0, 15):
                continue
            if case in _SADDLES:
                centre = 0.25 * (Z[i, j] + Z[i + 1, j] + Z[i + 1, j + 1] + Z[i, j + 1])
                pairs = _SADDLES[case][0 if centre > level else 1]
            else:
                pairs = _CASES[case]
            for e1, e2 in pairs:
                segments.append((edge_key(e1, i, j), edge_key(e2, i, j)))

    touching: dict = {}
    for s, (k1, k2) in enumerate(segments):
        touching.setdefault(k1, []).append(s)
        touching.setdefault(k2, []).append(s)
    used = np.zeros(len(segments), dtype=bool)

    def walk(start_key, seg):
        keys = [start_key]
        key = start_key
        while seg is not None and not used[seg]:
            used[seg] = True
            k1, k2 = segments[seg]
            key = k2 if k1 == key else k1
            keys.append(key)
            nxt = [s for s in touching[key] if not used[s]]
            seg = nxt[0] if nxt else None
        return keys

    lines = []
    # open lines start from keys touched by a single segment
    for key, segs in touching.items():
        if len(segs) == 1 and not used[segs[0]]:
            lines.append(walk(key, segs[0]))
    for s in range(len(segments)):
        if not used[s]:
            lines.append(walk(segments[s][0], s))
    return [np.array([vertex(k) for k in keys]) for keys in lines]


def boundary_contour_2d(xs, ys, p_grid, level: float = 0.5) -> BoundaryEstimate:
    """Level-0.5 contour of ``p_region1`` on a rectangular lattice ``p_grid[i, j]``."""
    return BoundaryEstimate(dimension=2, polylines=marching_squares(xs, ys, p_grid, level))


def grid_axes(design: LabelledDesign, resolution: int = GRID_RES) -> list[np.ndarray]:
    """Per-dimension lattice coordinates spanning the design's bounding box."""
    lo, hi = design.points.min(axis=0), design.points.max(axis=0)
    return [np.linspace(lo[k], hi[k], resolution) for k in range(design.dim)]


def grid_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def polyline_is_closed(line: np.ndarray, tol: float = 1e-9) -> bool:
    return len(line) > 2 and np.allclose(line[0], line[-1], atol=tol)


def polygon_area(line: np.ndarray) -> float:
    x, y = line[:, 0], line[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class TransformRecord:
    shift: np.ndarray

    def forward(self, points) -> np.ndarray:
        return as_points(points) - self.shift

    def inverse(self, points) -> np.ndarray:
        return as_points(points) + self.shift


def transform_inputs(design: LabelledDesign, approx_boundary_location) -> tuple[LabelledDesign, TransformRecord]:
    """Shift inputs so the approximate boundary sits at zero.

    The returned design keeps the original per-dimension widths but no
    offset, so zero stays at zero after scaling and a tight intercept prior
    pins the latent mean's zero crossing near the boundary.
    """
    shift = np.atleast_1d(np.asarray(approx_boundary_location, dtype=float))
    if shift.size != design.dim:
        raise ValueError("boundary location has wrong dimension")
    lo, hi = design.points.min(axis=0), design.points.max(axis=0)
    if np.any(shift < lo) or np.any(shift > hi):
        raise ValueError("approximate boundary lies outside the input range")
    rec = TransformRecord(shift)
    scale = ScaleInfo(np.zeros(design.dim), design.scale.width.copy())
    return LabelledDesign(rec.forward(design.points), design.labels, scale), rec


def _loo_fold(design, i, params, n_resamples, seed_seq, priors, config, full_refit):
    keep = np.delete(np.arange(design.n), i)
    sub = design.subset(keep)
    theta = params
    if full_refit:
        fold_cfg = MhConfig(**{**config.__dict__, "seed": int(seed_seq.generate_state(1)[0])})
        theta = map_estimate(mh_run(sub, priors, fold_cfg))
    rng = np.random.default_rng(seed_seq)
    E = draw_latent(sub, theta, reorder_for_boundary(sub), rng, n_resamples, raise_on_degenerate=False)
    E = E[np.all(np.isfinite(E), axis=1)]
    if E.shape[0] == 0:
        return 1.0
    cond = _Conditioner(sub.scaled(), theta)
    m, s = cond.predict(design.scaled()[i:i + 1], E)
    eta = m[:, 0] + s[0] * rng.standard_normal(E.shape[0])
    return float(np.mean(np.sign(eta) != design.labels[i]))


def loo_misclassification(design: LabelledDesign, n_resamples: int = 200, seed=None, *,
                          params: GpParams | None = None, priors: PriorSpec | None = None,
                          config: MhConfig | None = None, basis=MeanBasis.LINEAR,
                          full_refit: bool = False, threads: int = 1) -> MisclassificationReport:
    """Per-point rate at which held-out latent predictions take the wrong sign.

    For each point, latent vectors are resampled on the other ``n - 1``
    points and a latent value is drawn at the held-out point from its
    conditional. Parameters are the full-design MAP unless ``full_refit``.
    """
    if design.n < 3:
        raise ValueError("leave-one-out needs at least 3 points")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    priors = priors if priors is not None else default_priors(design, basis)
    config = config if config is not None else MhConfig()
    if params is None and not full_refit:
        params = map_estimate(mh_run(design, priors, config))
    seqs = np.random.SeedSequence(seed).spawn(design.n)

    def run(i):
        return _loo_fold(design, i, params, n_resamples, seqs[i], priors, config, full_refit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rates = list(ex.map(run, range(design.n)))
    else:
        rates = [run(i) for i in range(design.n)]
    return MisclassificationReport(np.array(rates), n_resamples, params)
