# test_geometry.py
import numpy as np
import pytest
from scipy.spatial.distance import cdist

from geometry import (Direction, angle_of, change_basis, sphere_grid, sphere_point_at_distance,
                      tangent_perturb, tangent_project, unit_sphere_sample)
from helper_functions import DimensionError, ValidationError


class TestDirection:
    def test_rejects_non_unit(self):
        with pytest.raises(ValidationError):
            Direction([1.0, 1.0])

    def test_rejects_one_dimension(self):
        with pytest.raises(DimensionError):
            Direction([1.0])

    def test_from_vector_normalizes(self):
        np.testing.assert_allclose(Direction.from_vector([3, 4]).coords, [0.6, 0.8])


class TestSphereSampling:
    def test_unit_norm_and_determinism(self):
        a = unit_sphere_sample(5, np.random.default_rng(7))
        b = unit_sphere_sample(5, np.random.default_rng(7))
        assert abs(np.linalg.norm(a.coords) - 1) < 1e-12
        assert a == b

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            unit_sphere_sample(1, np.random.default_rng(0))

    def test_coordinate_means_are_centered(self, rng):
        draws = np.array([unit_sphere_sample(3, rng).coords for _ in range(100_000)])
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)


class TestTangentProject:
    def test_examples(self):
        np.testing.assert_allclose(tangent_project([1, 0], [1, 0]), [0, 0])
        out = tangent_project([1, 0], [0, 1])
        np.testing.assert_allclose(out, [0, 1])
        delta_sq = 2.0
        assert abs(out @ out - delta_sq * (1 - delta_sq / 4)) < 1e-12

    def test_orthogonality_and_norm_identity(self, rng):
        for d in (2, 3, 6):
            for _ in range(50):
                t0 = unit_sphere_sample(d, rng)
                t = unit_sphere_sample(d, rng)
                out = tangent_project(t0, t)
                assert abs(out @ t0.coords) < 1e-10
                dsq = np.sum((t.coords - t0.coords) ** 2)
                assert abs(out @ out - dsq * (1 - dsq / 4)) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            tangent_project([1, 0], [1, 0, 0])


class TestChangeBasis:
    def test_canonical_direction_gives_identity(self):
        np.testing.assert_allclose(change_basis([1.0, 0.0]).columns, np.eye(2), atol=1e-15)

    def test_frame_invariants(self, rng):
        for d in (3, 4):
            t0 = unit_sphere_sample(d, rng)
            T = change_basis(t0).columns
            np.testing.assert_allclose(T.T @ T, np.eye(d), atol=1e-10)
            assert abs(abs(np.linalg.det(T)) - 1) < 1e-10
            e1 = np.zeros(d)
            e1[0] = 1
            np.testing.assert_allclose(T.T @ t0.coords, e1, atol=1e-10)

    def test_round_trip(self, rng):
        frame = change_basis(unit_sphere_sample(4, rng))
        x = rng.standard_normal(4)
        np.testing.assert_allclose(frame.from_frame(frame.to_frame(x)), x, atol=1e-10)

    def test_near_canonical_direction(self):
        T = change_basis(Direction.from_vector([1.0, 1e-9, 0.0])).columns
        np.testing.assert_allclose(T.T @ T, np.eye(3), atol=1e-10)


class TestSphereGrid:
    def test_quarter_turns(self):
        grid = sphere_grid(2, 4)
        np.testing.assert_allclose(grid, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)

    def test_three_d_points_are_distinct(self):
        grid = sphere_grid(3, 1000)
        assert grid.shape == (1000, 3)
        D = cdist(grid, grid)
        np.fill_diagonal(D, np.inf)
        assert D.min() > 0

    def test_covering_radius_in_two_d(self, rng):
        grid = sphere_grid(2, 360)
        angles = np.sort([angle_of(g) for g in grid])
        for alpha in rng.uniform(0, 2 * np.pi, 2000):
            gap = np.abs(np.angle(np.exp(1j * (angles - alpha))))
            assert gap.min() <= np.pi / 360 + 1e-12

    def test_unit_norm_and_deterministic_in_higher_d(self):
        a = sphere_grid(5, 64)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(a, sphere_grid(5, 64))

    def test_resolution_too_small(self):
        with pytest.raises(ValidationError):
            sphere_grid(2, 3)


class TestPerturbations:
    def test_point_at_chord_distance(self, rng):
        t0 = unit_sphere_sample(3, rng)
        for delta in (0.05, 0.3, 1.0):
            theta = sphere_point_at_distance(t0, delta, rng)
            assert abs(np.linalg.norm(theta.coords - t0.coords) - delta) < 1e-12

    def test_tangent_perturb_stays_close(self, rng):
        t0 = unit_sphere_sample(4, rng).coords
        pts = tangent_perturb(t0, 0.01, rng, 32)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
        assert np.all(np.linalg.norm(pts - t0, axis=1) <= 0.01 + 1e-12)
