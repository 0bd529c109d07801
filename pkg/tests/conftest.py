"""Shared fixtures: fitted 1d demo and helper oracles."""

from __future__ import annotations

import numpy as np
import pytest

from latentclass import (
    MeanBasis,
    MhConfig,
    default_priors,
    map_estimate,
    mh_run,
    step_1d,
    transform_inputs,
)


def fit_step_1d(seed: int, config: MhConfig | None = None, transformed: bool = True, design=None):
    """Fit the 1d step demo the way the CLI demo does; returns (design, priors, chain)."""
    if design is None:
        design = step_1d()[1]
    if transformed:
        design, _ = transform_inputs(design, 7.0)
    priors = default_priors(design, MeanBasis.LINEAR, intercept_tight=transformed)
    cfg = config if config is not None else MhConfig(seed=seed)
    return design, priors, mh_run(design, priors, cfg)


@pytest.fixture(scope="session")
def step_fit():
    design, priors, chain = fit_step_1d(seed=11)
    return design, priors, chain, map_estimate(chain)


def random_spd(rng, n: int, cond_floor: float = 0.1) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return A @ A.T / n + cond_floor * np.eye(n)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
