# test_firststage.py
import numpy as np
import pytest

from dgp import Dataset, ErrorSpec, LinkSpec, simulate_binary, simulate_multi_index, true_h0
from firststage import (FirstStageFit, OracleFit, ball_density, fit_first_stage, gaussian_kernel,
                        interior_grid, nw_estimate, nw_estimate_with_density, sup_norm_error)
from geometry import Direction
from helper_functions import EvaluationError, ValidationError

THETA0 = Direction([1.0, 0.0])
ONE_POINT = Dataset([1], [[0.1, 0.2]])


class TestKernelAndDensity:
    def test_gaussian_kernel_values(self):
        assert abs(gaussian_kernel(2, np.zeros(2)) - 1 / (2 * np.pi)) < 1e-12
        assert abs(gaussian_kernel(1, [1.0]) - 0.241971) < 1e-6

    def test_gaussian_kernel_symmetry(self, rng):
        u = rng.standard_normal(4)
        assert gaussian_kernel(4, u) == gaussian_kernel(4, -u)

    def test_ball_density(self):
        assert abs(ball_density(2) - 1 / np.pi) < 1e-12
        assert abs(ball_density(3) - 3 / (4 * np.pi)) < 1e-12
        assert abs(ball_density(1) - 0.5) < 1e-12


class TestNadarayaWatson:
    def test_single_point_hand_value(self):
        fit = fit_first_stage(ONE_POINT, 1.0)
        assert abs(nw_estimate(fit, [0.1, 0.2]) - 0.25) < 1e-12

    def test_far_point_decays(self, rng):
        data = simulate_binary(200, 2, THETA0, ErrorSpec(), rng)
        fit = fit_first_stage(data, 1.0)
        assert abs(nw_estimate(fit, [20.0, 20.0])) < 1e-20

    def test_opposite_weights_cancel(self):
        data = Dataset([1, 0], [[0.3, 0.3], [0.3, 0.3]])
        assert nw_estimate(fit_first_stage(data, 1.0), [0.3, 0.3]) == 0

    def test_empty_support_rejected(self):
        with pytest.raises(ValidationError):
            FirstStageFit(np.zeros((0, 2)), np.zeros(0), 0.5)

    def test_underflowing_bandwidth_rejected(self):
        with pytest.raises(ValidationError, match='underflows'):
            fit_first_stage(ONE_POINT, 1e-300)

    def test_known_density_evaluator_rejects_estimated_fit(self):
        fit = FirstStageFit(ONE_POINT.X, ONE_POINT.y - 0.5, 1.0, mode='estimated-density')
        with pytest.raises(ValidationError):
            nw_estimate(fit, [0.0, 0.0])

    def test_linear_in_weights(self, rng):
        data = simulate_binary(300, 2, THETA0, ErrorSpec(), rng)
        points = rng.uniform(-0.5, 0.5, (20, 2))
        base = FirstStageFit(data.X, data.y - 0.5, 0.3).evaluate(points)
        scaled = FirstStageFit(data.X, 3.0 * (data.y - 0.5), 0.3).evaluate(points)
        np.testing.assert_allclose(scaled, 3.0 * base, rtol=1e-12, atol=1e-15)

    def test_triangle_bound(self, rng):
        data = simulate_binary(300, 2, THETA0, ErrorSpec(), rng)
        b = 0.2
        fit = fit_first_stage(data, b)
        values = fit.evaluate(rng.uniform(-1, 1, (500, 2)))
        bound = (1 / ball_density(2)) * (1 / b ** 2) * 0.5 * gaussian_kernel(2, np.zeros(2))
        assert np.all(np.abs(values) <= bound)

    def test_translation_equivariance(self, rng):
        data = simulate_binary(100, 2, THETA0, ErrorSpec(), rng)
        shift = np.array([0.7, -1.3])
        x = np.array([[0.2, 0.1]])
        a = FirstStageFit(data.X, data.y - 0.5, 0.4).evaluate_known_density(x)
        b = FirstStageFit(data.X + shift, data.y - 0.5, 0.4).evaluate_known_density(x + shift)
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)

    def test_values_at_is_cached(self, rng):
        data = simulate_binary(50, 2, THETA0, ErrorSpec(), rng)
        fit = fit_first_stage(data, 0.3)
        assert fit.values_at(data.X) is fit.values_at(data.X)


class TestEstimatedDensity:
    def test_single_point_ratio(self):
        fit = fit_first_stage(ONE_POINT, 1.0)
        assert abs(nw_estimate_with_density(fit, [0.1, 0.2]) - 0.5) < 1e-12

    def test_constant_outcomes(self, rng):
        X = simulate_binary(200, 2, THETA0, ErrorSpec(), rng).X
        fit = fit_first_stage(Dataset(np.ones(200), X), 0.3)
        assert abs(nw_estimate_with_density(fit, [0.1, -0.2]) - 0.5) < 1e-12

    def test_out_of_support_point(self):
        fit = fit_first_stage(ONE_POINT, 0.1)
        with pytest.raises(EvaluationError, match="out-of-support"):
            nw_estimate_with_density(fit, [5.0, 5.0])

    def test_agrees_with_known_density_at_center(self, rng):
        n = 10_000
        data = simulate_binary(n, 2, THETA0, ErrorSpec(), rng)
        fit = fit_first_stage(data, n ** (-1 / 6))
        center = [0.0, 0.0]
        assert abs(nw_estimate(fit, center) - nw_estimate_with_density(fit, center)) < 1e-3

    def test_multi_index_fit_uses_estimated_density(self, rng):
        data = simulate_multi_index(200, 2, 2, THETA0, LinkSpec(), 0.1, rng)
        fit = fit_first_stage(data, 0.4)
        assert fit.mode == 'estimated-density'
        assert fit.d == 4
        assert abs(fit.reference_density - 1 / np.pi ** 2) < 1e-12
        with pytest.raises(ValidationError):
            fit_first_stage(data, 0.4, mode='known-density')


class TestSupNorm:
    def test_oracle_fit_is_exact(self):
        h0 = lambda X: true_h0(X, THETA0, ErrorSpec())
        grid = interior_grid(2, 11)
        assert sup_norm_error(OracleFit(h0), h0, grid) == 0

    def test_singleton_grid(self, rng):
        data = simulate_binary(100, 2, THETA0, ErrorSpec(), rng)
        fit = fit_first_stage(data, 0.4)
        x0 = np.array([[0.1, 0.2]])
        h0 = lambda X: true_h0(X, THETA0, ErrorSpec())
        assert sup_norm_error(fit, h0, x0) == pytest.approx(abs(nw_estimate(fit, x0[0]) - h0(x0)[0]))

    def test_interior_grid(self):
        grid = interior_grid(2, 21, radius=0.5)
        assert np.linalg.norm(grid, axis=1).max() <= 0.5 + 1e-12
        assert any(np.all(g == 0) for g in grid)
