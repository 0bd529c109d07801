import math

import numpy as np
import pytest

from conftest import fit_step_1d
from latentclass import (
    BoundaryError,
    GpParams,
    LabelledDesign,
    LatentSample,
    MeanBasis,
    MhConfig,
    boundary_1d,
    boundary_contour_2d,
    class_probability,
    default_priors,
    latent_ensemble,
    loo_misclassification,
    map_estimate,
    marching_squares,
    mean_vector,
    mh_run,
    santner_ring,
    step_1d,
    transform_inputs,
)
from latentclass.prediction import grid_axes, grid_points, polygon_area, polyline_is_closed
from latentclass.testbed import SantnerParams


@pytest.fixture(scope="module")
def step_ensemble(step_fit):
    design, _, _, theta = step_fit
    return design, theta, latent_ensemble(design, theta, 200, seed=21)


@pytest.fixture(scope="module")
def santner_fit():
    problem, design = santner_ring(seed=0)
    pri = default_priors(design, MeanBasis.CONSTANT)
    theta = map_estimate(mh_run(design, pri, MhConfig(seed=0)))
    ens = latent_ensemble(design, theta, 200, seed=1)
    axes = grid_axes(design, 101)
    pred = class_probability(grid_points(axes), design, ens)
    return problem, design, theta, axes, pred


class TestClassProbability:
    def test_coincident_design_point(self, step_ensemble):
        design, _, ens = step_ensemble
        pred = class_probability(design.points, design, ens)
        np.testing.assert_array_equal(pred.p_region1, (design.labels < 0).astype(float))
        assert np.all(pred.predicted_labels() == design.labels)

    def test_far_point_reverts_to_prior_sign(self):
        d = LabelledDesign.from_arrays([[0.0], [0.4], [0.6], [1.0]], [-1, -1, 1, 1])
        theta = GpParams([-1.0], 1.0, 0.05)
        ens = latent_ensemble(d, theta, 50, seed=0)
        assert class_probability([[40.0]], d, ens).p_region1[0] > 0.5

    def test_gap_midpoint_is_uncertain(self, step_ensemble):
        design, _, ens = step_ensemble
        # the fitted design is shifted by 7, so the gap midpoint sits at 0
        p = class_probability([[0.0]], design, ens).p_region1[0]
        assert 0.2 <= p <= 0.8

    def test_closure_and_positive_sd(self, step_ensemble):
        design, _, ens = step_ensemble
        pred = class_probability(np.linspace(-7, 13, 41).reshape(-1, 1), design, ens)
        assert np.all((pred.p_region1 >= 0) & (pred.p_region1 <= 1))
        np.testing.assert_allclose(pred.p_region1 + pred.p_region2, 1.0)
        assert np.all(pred.latent_sd > 0)
        assert pred[0].p_region2 == pytest.approx(1 - pred[0].p_region1)

    def test_params_override(self, step_ensemble):
        design, theta, ens = step_ensemble
        a = class_probability([[0.3]], design, ens)
        b = class_probability([[0.3]], design, ens, params=theta)
        assert a.p_region1[0] == b.p_region1[0]

    def test_empty_ensemble(self, step_ensemble):
        with pytest.raises(ValueError):
            class_probability([[0.0]], step_ensemble[0], [])


class TestBoundary1d:
    def test_linear_latent_root(self):
        _, design = step_1d()
        theta = GpParams([-0.7, 2.0], 1.0, 0.05)  # latent mean 2u - 0.7 crosses zero at x = 7
        values = mean_vector(design.scaled(), MeanBasis.LINEAR, theta.beta)
        ens = [LatentSample(values, theta)]
        est = boundary_1d(design, ens)
        assert est.root == pytest.approx(7.0, abs=1e-4 * 20)
        np.testing.assert_allclose(est.member_roots, 7.0, atol=1e-4 * 20)

    def test_demo_root_and_interval(self, step_ensemble):
        design, _, ens = step_ensemble
        est = boundary_1d(design, ens)
        root, (lo, hi) = est.root + 7, (est.credible_interval[0] + 7, est.credible_interval[1] + 7)
        assert 6 < root < 8
        assert lo <= 6.5 and hi >= 7.5
        assert 5.5 <= lo and hi <= 8.5
        assert "root,lower,upper" in est.to_csv()

    def test_single_class_has_no_boundary(self):
        d = LabelledDesign.from_arrays([[0.0], [1.0], [2.0]], [1, 1, 1])
        with pytest.raises(BoundaryError):
            boundary_1d(d, [LatentSample(np.ones(3), GpParams([1.0, 0.0], 1.0, 0.1))])

    def test_no_crossing_in_interval(self, step_ensemble):
        design, _, ens = step_ensemble
        with pytest.raises(BoundaryError):
            boundary_1d(design, ens, search_interval=(3.0, 13.0))

    @pytest.mark.slow
    def test_point_in_gap_narrows_interval(self):
        base = step_1d()[1]
        extra = LabelledDesign.from_arrays(np.vstack([base.points, [[7.5]]]), np.append(base.labels, 1))
        cfg = dict(n_iterations=4000, burn_in=1000, thin=2)
        widths = {"base": [], "extra": []}
        for seed in range(20):
            for key, d in (("base", base), ("extra", extra)):
                design, _, chain = fit_step_1d(seed, MhConfig(seed=seed, **cfg), design=d)
                ens = latent_ensemble(design, chain, 100, seed=seed)
                lo, hi = boundary_1d(design, ens).credible_interval
                widths[key].append(hi - lo)
        assert np.median(widths["extra"]) < np.median(widths["base"])


class TestContour:
    def test_step_field(self):
        xs = np.linspace(-1, 7, 81)
        ys = np.linspace(-1, 7, 41)
        P = np.repeat((xs < 3).astype(float)[:, None], ys.size, axis=1)
        lines = boundary_contour_2d(xs, ys, P).polylines
        assert len(lines) == 1
        assert np.all(np.abs(lines[0][:, 0] - 3) <= xs[1] - xs[0])
        assert lines[0][:, 1].min() == -1 and lines[0][:, 1].max() == 7

    def test_circle_field(self):
        xs = ys = np.linspace(-1, 1, 101)
        r = 0.6
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        P = (np.hypot(X, Y) < r).astype(float)
        lines = marching_squares(xs, ys, P)
        assert len(lines) == 1 and polyline_is_closed(lines[0])
        radii = np.hypot(lines[0][:, 0], lines[0][:, 1])
        assert np.all(np.abs(radii - r) <= math.sqrt(2) * (xs[1] - xs[0]))
        assert polygon_area(lines[0]) == pytest.approx(math.pi * r * r, rel=0.05)

    def test_saddle_gives_two_segments(self):
        lines = marching_squares([0, 1], [0, 1], np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert len(lines) == 2 and all(len(l) == 2 for l in lines)

    def test_vertices_on_cell_edges(self):
        xs = ys = np.linspace(0, 1, 11)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        P = 1 / (1 + np.exp(-8 * (X + 0.5 * Y - 0.7)))
        for line in marching_squares(xs, ys, P):
            on_x = np.isclose(line[:, 0][:, None], xs[None, :]).any(axis=1)
            on_y = np.isclose(line[:, 1][:, None], ys[None, :]).any(axis=1)
            assert np.all(on_x | on_y)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            marching_squares([0.0], [0.0, 1.0], np.zeros((1, 2)))

    def test_santner_contour(self, santner_fit):
        _, _, _, axes, pred = santner_fit
        P = pred.p_region1.reshape(101, 101)
        est = boundary_contour_2d(axes[0], axes[1], P)
        assert sum(polyline_is_closed(l) for l in est.polylines) >= 1
        sp = SantnerParams()
        true_area = math.pi * (sp.c2_sq - sp.c1_sq)
        cell = (axes[0][1] - axes[0][0]) * (axes[1][1] - axes[1][0])
        # the annulus carries the positive sign in this problem
        band_area = np.sum(P < 0.5) * cell
        assert abs(band_area - true_area) <= 0.3 * true_area
        csv_text = est.to_csv()
        assert csv_text.startswith("polyline_id,vertex_index,x1,x2")


class TestTransform:
    def test_gap_moves_to_origin(self):
        tdesign, rec = transform_inputs(step_1d()[1], 7.0)
        x = tdesign.points[:, 0]
        assert x[tdesign.labels < 0].max() == -1.0 and x[tdesign.labels > 0].min() == 1.0
        assert np.all(tdesign.scaled()[:, 0] * 20 == pytest.approx(x))

    def test_round_trip(self):
        d = santner_ring(seed=3)[1]
        t, rec = transform_inputs(d, [0.1, -0.2])
        np.testing.assert_allclose(rec.inverse(t.points), d.points, atol=1e-12)

    def test_outside_range(self):
        with pytest.raises(ValueError):
            transform_inputs(step_1d()[1], 25.0)
        with pytest.raises(ValueError):
            transform_inputs(step_1d()[1], [1.0, 2.0])

    @pytest.mark.slow
    def test_equivariance(self):
        for seed in (0, 1):
            tdesign, _, tchain = fit_step_1d(seed, transformed=True)
            design, _, chain = fit_step_1d(seed, transformed=False)
            t_root = boundary_1d(tdesign, latent_ensemble(tdesign, tchain, 200, seed=seed)).root + 7
            root = boundary_1d(design, latent_ensemble(design, chain, 200, seed=seed)).root
            assert abs(t_root - root) < 0.1


class TestLoo:
    def test_rates_bounded_and_flanking(self, step_fit):
        design, _, _, theta = step_fit
        rep = loo_misclassification(design, 200, seed=4, params=theta)
        assert np.all((rep.per_point_rate >= 0) & (rep.per_point_rate <= 1))
        assert set(rep.top_points(2)) == {3, 4}
        others = np.delete(rep.per_point_rate, [3, 4])
        assert np.all(others < 0.05)
        assert rep.to_csv(design).splitlines()[0] == "point_index,x1,label,rate"

    def test_single_resample_is_binary(self, step_fit):
        design, _, _, theta = step_fit
        rep = loo_misclassification(design, 1, seed=0, params=theta)
        assert set(np.unique(rep.per_point_rate)) <= {0.0, 1.0}

    def test_thread_count_does_not_matter(self, step_fit):
        design, _, _, theta = step_fit
        a = loo_misclassification(design, 20, seed=2, params=theta, threads=1)
        b = loo_misclassification(design, 20, seed=2, params=theta, threads=3)
        np.testing.assert_array_equal(a.per_point_rate, b.per_point_rate)

    def test_needs_three_points(self):
        d = LabelledDesign.from_arrays([[0.0], [1.0]], [-1, 1])
        with pytest.raises(ValueError):
            loo_misclassification(d, 10, params=GpParams([0.0, 0.0], 1.0, 0.1))

    def test_full_refit_runs(self):
        d = step_1d()[1].subset([1, 2, 3, 4, 5, 6])
        rep = loo_misclassification(d, 20, seed=0, full_refit=True,
                                    config=MhConfig(n_iterations=400, burn_in=100, thin=1, seed=0))
        assert rep.per_point_rate.shape == (6,)
        assert np.all((rep.per_point_rate >= 0) & (rep.per_point_rate <= 1))
