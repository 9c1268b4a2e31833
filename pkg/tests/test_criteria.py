# test_criteria.py
import numpy as np
import pytest
from scipy.special import ndtr

from criteria import (CriterionSpec, make_criterion, ms_criterion, population_identity_check, sms_criterion,
                      tsms_criterion, tsms_mmi_criterion)
from dgp import (Dataset, ErrorSpec, LinkSpec, MultiDataset, multi_index_h0, simulate_binary,
                 simulate_multi_index, true_h0)
from firststage import OracleFit, fit_first_stage
from geometry import Direction, sphere_grid, unit_sphere_sample
from helper_functions import DimensionError, ValidationError

THETA0 = Direction([1.0, 0.0])


class TestMaximumScore:
    def test_two_point_values(self, two_point):
        assert ms_criterion(two_point, [1.0, 0.0]) == 0.25
        assert ms_criterion(two_point, [-1.0, 0.0]) == -0.25

    def test_all_ones(self, rng):
        X = rng.uniform(0.1, 0.6, (30, 2))
        data = Dataset(np.ones(30), X)
        assert ms_criterion(data, Direction.from_vector([1, 1])) == 0.5

    def test_piecewise_constant(self, rng):
        data = simulate_binary(200, 2, THETA0, ErrorSpec(), rng)
        theta = Direction.from_vector([0.8, 0.6]).coords
        assert np.min(np.abs(data.X @ theta)) > 1e-6
        nudged = theta + np.array([-0.6, 0.8]) * 1e-9
        assert ms_criterion(data, theta) == ms_criterion(data, nudged)

    def test_scale_invariance(self, rng):
        data = simulate_binary(100, 3, Direction.from_vector([1, 1, 1]), ErrorSpec(), rng)
        theta = unit_sphere_sample(3, rng).coords
        fit = fit_first_stage(data, 0.4)
        assert ms_criterion(data, theta) == ms_criterion(data, 2.5 * theta)
        assert tsms_criterion(data, fit, theta) == tsms_criterion(data, fit, 2.5 * theta)

    def test_dimension_mismatch(self, two_point):
        with pytest.raises(DimensionError):
            ms_criterion(two_point, [1.0, 0.0, 0.0])


class TestSmoothedMaximumScore:
    def test_two_point_value(self, two_point):
        expected = 0.25 * (2 * ndtr(0.5) - 1)
        assert abs(sms_criterion(two_point, [1.0, 0.0], 1.0) - expected) < 1e-12
        assert abs(expected - 0.0957312) < 1e-6

    def test_indices_on_hyperplane(self):
        data = Dataset([1, 0, 1], [[0.0, 0.3], [0.0, -0.5], [0.0, 0.1]])
        expected = np.mean((data.y - 0.5) * 0.5)
        assert abs(sms_criterion(data, [1.0, 0.0], 0.7) - expected) < 1e-15

    def test_small_bandwidth_matches_ms(self, rng):
        data = simulate_binary(300, 2, THETA0, ErrorSpec(), rng)
        theta = unit_sphere_sample(2, rng)
        assert abs(sms_criterion(data, theta, 1e-8) - ms_criterion(data, theta)) < 1e-12


class TestTwoStage:
    def test_zero_first_stage(self, rng):
        data = simulate_binary(50, 2, THETA0, ErrorSpec(), rng)
        zero = OracleFit(lambda X: np.zeros(X.shape[0]))
        for theta in sphere_grid(2, 16):
            assert tsms_criterion(data, zero, theta) == 0

    def test_oracle_maximized_at_theta0(self, rng):
        data = simulate_binary(400, 2, THETA0, ErrorSpec('degenerate'), rng)
        oracle = OracleFit(lambda X: true_h0(X, THETA0, ErrorSpec()))
        values = [tsms_criterion(data, oracle, t) for t in sphere_grid(2, 360)]
        assert tsms_criterion(data, oracle, THETA0) >= max(values)

    def test_single_observation(self):
        data = Dataset([1], [[0.1, 0.2]])
        fit = fit_first_stage(data, 1.0)
        assert abs(tsms_criterion(data, fit, [1.0, 0.0]) - 0.25) < 1e-12


class TestMultiIndex:
    def test_penalty_terms(self):
        X = np.array([[[-0.2, 0.0], [-0.4, 0.1]],
                      [[0.3, 0.0], [0.1, 0.0]]])
        data = MultiDataset([0.0, 0.0], X)
        fit = OracleFit(lambda Z: np.array([0.3, 0.0]))
        assert abs(tsms_mmi_criterion(data, fit, THETA0) + 0.15) < 1e-15
        positive = OracleFit(lambda Z: np.array([0.3, 0.2]))
        # row 2 is all-positive with ĥ > 0, so only row 1 is penalized
        assert abs(tsms_mmi_criterion(data, positive, THETA0) + 0.15) < 1e-15

    def test_oracle_maximized_at_theta0(self, rng):
        link = LinkSpec()
        data = simulate_multi_index(300, 2, 2, THETA0, link, 0.0, rng)
        oracle = OracleFit(lambda Z: multi_index_h0(Z.reshape(-1, 2, 2), THETA0, link))
        at_truth = tsms_mmi_criterion(data, oracle, THETA0)
        assert at_truth == 0
        for theta in sphere_grid(2, 180):
            value = tsms_mmi_criterion(data, oracle, theta)
            assert value <= 0
            assert at_truth >= value

    def test_single_index_case_selects_same_maximizer(self, rng):
        data = simulate_binary(200, 2, THETA0, ErrorSpec(), rng)
        fit = fit_first_stage(data, 0.3)
        grid = sphere_grid(2, 720)
        tsms = [tsms_criterion(data, fit, t) for t in grid]
        mmi = [tsms_mmi_criterion(data, fit, t) for t in grid]
        assert int(np.argmax(tsms)) == int(np.argmax(mmi))


class TestCriterionObjects:
    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            CriterionSpec('sms')
        with pytest.raises(ValidationError):
            CriterionSpec('tsms')
        with pytest.raises(ValidationError):
            CriterionSpec('probit')

    def test_matches_plain_functions(self, rng):
        data = simulate_binary(150, 2, THETA0, ErrorSpec(), rng)
        theta = unit_sphere_sample(2, rng)
        assert make_criterion(data, CriterionSpec('ms'))(theta) == ms_criterion(data, theta)
        assert make_criterion(data, CriterionSpec('sms', bandwidth=0.3))(theta) == sms_criterion(data, theta, 0.3)
        fit = fit_first_stage(data, 0.3)
        crit = make_criterion(data, CriterionSpec('tsms', first_stage=fit))
        assert crit(theta) == tsms_criterion(data, fit, theta)

    def test_evaluate_many_agrees(self, rng):
        data = simulate_multi_index(120, 3, 2, THETA0, LinkSpec(), 0.1, rng)
        crit = make_criterion(data, CriterionSpec('tsms-mmi', bandwidth=0.5))
        grid = sphere_grid(2, 64)
        np.testing.assert_allclose(crit.evaluate_many(grid), [crit(t) for t in grid], atol=1e-14)

    def test_split_sample(self, rng):
        data = simulate_binary(101, 2, THETA0, ErrorSpec(), rng)
        crit = make_criterion(data, CriterionSpec('tsms', bandwidth=0.4, split_sample=True))
        assert crit.n == 101 - round(101 * 0.5)
        assert crit.first_stage.n == round(101 * 0.5)


class TestPopulationIdentity:
    def test_two_point(self, two_point):
        lhs, rhs = population_identity_check(two_point, 0.5, [1.0, 0.0])
        assert abs(lhs - rhs) < 1e-6

    def test_mirrored_pairs_vanish(self, rng):
        X = rng.uniform(-0.5, 0.5, (5, 2))
        data = Dataset([1, 0] * 5, np.repeat(X, 2, axis=0))
        lhs, rhs = population_identity_check(data, 0.3, unit_sphere_sample(2, rng))
        assert abs(lhs) < 1e-6 and abs(rhs) < 1e-6

    def test_random_instances(self, rng):
        data = simulate_binary(20, 2, THETA0, ErrorSpec(), rng)
        worst = 0.0
        for _ in range(5):
            lhs, rhs = population_identity_check(data, 0.3, unit_sphere_sample(2, rng))
            worst = max(worst, abs(lhs - rhs))
        assert worst <= 1e-5

    def test_needs_two_dimensions(self, rng):
        data = simulate_binary(10, 3, Direction.from_vector([1, 1, 1]), ErrorSpec(), rng)
        with pytest.raises(DimensionError):
            population_identity_check(data, 0.3, Direction.from_vector([1, 1, 1]))
