"""Synthetic two-region problems and Latin hypercube designs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core_gp import as_points
from .design import LabelledDesign

STEP_1D_POINTS = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 19.0, 20.0)
STEP_1D_GAP = (6.0, 8.0)
DEFAULT_SEED = 0


@dataclass(frozen=True)
class SyntheticProblem:
    name: str
    dimension: int
    input_ranges: tuple
    truth: Callable[[np.ndarray], np.ndarray]  # points -> signs (-1 region 1, +1 region 2)
    description: str
    basis: str = "linear"

    def labels(self, points) -> np.ndarray:
        return self.truth(as_points(points))


@dataclass(frozen=True)
class SantnerParams:
    a: tuple = (3.0, 5.0)
    Q: tuple = ((2.0, 1.5), (1.5, 4.0))
    c1_sq: float = 0.25**2
    c2_sq: float = 0.75**2


def latin_hypercube(n: int, ranges, seed=None) -> np.ndarray:
    """Stratified design: each axis split into ``n`` equal bins, one point per bin."""
    if n < 1:
        raise ValueError("n must be >= 1")
    r = np.asarray(ranges, dtype=float).reshape(-1, 2)
    if np.any(r[:, 1] <= r[:, 0]):
        raise ValueError("each range needs lower < upper")
    rng = np.random.default_rng(seed)
    d = r.shape[0]
    u = np.empty((n, d))
    for k in range(d):
        u[:, k] = (rng.permutation(n) + rng.random(n)) / n
    return r[:, 0] + u * (r[:, 1] - r[:, 0])


def _step_truth(X):
    return np.where(X[:, 0] < 7.0, -1, 1)


def step_1d() -> tuple[SyntheticProblem, LabelledDesign]:
    """12 points on [0, 20]; [0, 6] is region 1, [8, 20] region 2, nothing in (6, 8).

    The point locations are a reconstruction. The truth rule splits the gap
    at 7 and is used for scoring only.
    """
    prob = SyntheticProblem(
        "step_1d", 1, ((0.0, 20.0),), _step_truth,
        "1d step: region 1 on [0,6], region 2 on [8,20], boundary somewhere in [6,8] "
        "(scored at 7). Point locations reconstructed.",
    )
    X = np.array(STEP_1D_POINTS).reshape(-1, 1)
    labels = np.where(X[:, 0] <= STEP_1D_GAP[0], -1, 1)
    return prob, LabelledDesign.from_arrays(X, labels)


def _halfplane_truth(X):
    return np.where(X[:, 0] < 3.0, -1, 1)


def halfplane_2d(seed=DEFAULT_SEED) -> tuple[SyntheticProblem, LabelledDesign]:
    prob = SyntheticProblem(
        "halfplane_2d", 2, ((-1.0, 7.0), (-1.0, 7.0)), _halfplane_truth,
        "2d half-plane on [-1,7]^2: region 1 iff x1 < 3.",
    )
    X = latin_hypercube(20, prob.input_ranges, seed)
    return prob, LabelledDesign.from_arrays(X, prob.labels(X))


def santner_truth(X, params: SantnerParams = SantnerParams()) -> np.ndarray:
    """+1 between the rings (c1^2 <= r^2 <= c2^2), -1 elsewhere."""
    r2 = np.sum(as_points(X) ** 2, axis=1)
    return np.where((r2 >= params.c1_sq) & (r2 <= params.c2_sq), 1, -1)


def santner_ring(seed=DEFAULT_SEED) -> tuple[SyntheticProblem, LabelledDesign]:
    """50-point LHS on [-1.25, 1.25]^2 labelled by the two-ring rule.

    The annulus is the source problem's "region 1" but is stored with the
    POSITIVE sign, so in this library's sign convention the annulus is the
    positive (region-2) class and the inner disc plus outer area is the
    negative class. Function values inside the annulus are not modelled.
    """
    prob = SyntheticProblem(
        "santner_ring", 2, ((-1.25, 1.25), (-1.25, 1.25)), santner_truth,
        "Two-ring problem: annulus 0.25^2 <= x1^2+x2^2 <= 0.75^2 is labelled POSITIVE "
        "(the source's 'region 1'); inside and outside are negative. NOTE: sign flipped "
        "relative to the library's region-1-negative convention.",
        basis="constant",
    )
    X = latin_hypercube(50, prob.input_ranges, seed)
    return prob, LabelledDesign.from_arrays(X, prob.labels(X))


KNDY_RANGES = ((0.1, 0.2), (10.0, 200.0))
# Stand-in boundary on the unit square: region 1 iff u2 < KNDY_A + KNDY_B * (u1 - 0.5)^2.
# Threshold fixed so the default-seed design has exactly 5 region-1 points.
KNDY_A = 0.18
KNDY_B = 1.0


def _kndy_truth(X):
    r = np.asarray(KNDY_RANGES)
    u = (as_points(X) - r[:, 0]) / (r[:, 1] - r[:, 0])
    return np.where(u[:, 1] < KNDY_A + KNDY_B * (u[:, 0] - 0.5) ** 2, -1, 1)


def kndy_stand_in(seed=DEFAULT_SEED) -> tuple[SyntheticProblem, LabelledDesign]:
    """20-point LHS on [0.1, 0.2] x [10, 200] with a SURROGATE curved boundary.

    The real system is an ODE model that is not available here; the truth
    rule is an invented smooth curve giving 5 region-1 and 15 region-2
    points for the default seed.
    """
    prob = SyntheticProblem(
        "kndy_stand_in", 2, KNDY_RANGES, _kndy_truth,
        "SURROGATE for the KNDy neuron model (simulator unavailable): region 1 iff "
        f"u2 < {KNDY_A} + {KNDY_B}*(u1-0.5)^2 on unit-scaled inputs.",
    )
    X = latin_hypercube(20, KNDY_RANGES, seed)
    return prob, LabelledDesign.from_arrays(X, prob.labels(X))


DEMOS = {
    "step_1d": lambda seed=DEFAULT_SEED: step_1d(),
    "halfplane_2d": halfplane_2d,
    "santner_ring": santner_ring,
    "kndy_stand_in": kndy_stand_in,
}
