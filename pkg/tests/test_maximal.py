"""
极大算子测试
"""

import os
import sys
import unittest
from fractions import Fraction
from unittest.mock import patch

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

# 添加项目根目录到Python路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from harmonics.convex import support
from harmonics.errors import InputError, InvariantViolation
from harmonics.geometry import Cube, Grid
from harmonics.maximal import (
    VectorField,
    auxiliary_maximal,
    auxiliary_n,
    convex_body_maximal,
    eta_maximal,
    maximal_sparse_dominate,
    multilinear_maximal,
    strong_type_ratio,
    weak_type_check,
    weighted_maximal,
)
from harmonics.muckenhoupt import derived_exponents
from harmonics.weights import make_weight


class TestScalarMaximal(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 2)
        self.cubes = self.grid.dyadic_cubes()
        self.spike = np.array([4.0, 0.0, 0.0, 0.0])

    def test_eta_one(self):
        np.testing.assert_allclose(eta_maximal(self.grid, self.spike, 1, self.cubes), [4, 2, 1, 1])

    def test_eta_half(self):
        values = eta_maximal(self.grid, self.spike, 0.5, self.cubes)
        np.testing.assert_allclose(values, [4, 1, 0.25, 0.25])

    def test_multilinear(self):
        values = multilinear_maximal(self.grid, [self.spike, self.spike], self.cubes)
        np.testing.assert_allclose(values, [16, 4, 1, 1])

    def test_cells_outside_family(self):
        half = Cube((0,), Fraction(1, 2))
        np.testing.assert_allclose(eta_maximal(self.grid, self.spike, 1, [half]), [2, 2, 0, 0])

    def test_empty_family(self):
        with self.assertRaises(InputError):
            eta_maximal(self.grid, self.spike, 1, [])

    def test_non_finite_field(self):
        with self.assertRaises(InputError):
            VectorField(self.grid, np.array([1.0, np.nan, 0.0, 0.0]))


class TestWeightedMaximal(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 3)
        self.cubes = self.grid.dyadic_cubes()
        self.rng = np.random.default_rng(5)

    def test_identity_weight_is_norm_maximal(self):
        field = VectorField(self.grid, self.rng.standard_normal((self.grid.n_cells, 2)))
        weight = make_weight({"kind": "identity", "n": 2}, self.grid)
        np.testing.assert_allclose(weighted_maximal([field], [weight], [1], self.cubes),
                                   eta_maximal(self.grid, field.norms(), 1, self.cubes))

    def test_auxiliary_matches_for_scalar_identity(self):
        field = VectorField(self.grid, self.rng.standard_normal(self.grid.n_cells))
        weight = make_weight({"kind": "identity", "n": 1}, self.grid)
        np.testing.assert_allclose(auxiliary_maximal([field], [weight], [2], [2], self.cubes),
                                   weighted_maximal([field], [weight], [2], self.cubes))

    def test_length_mismatch(self):
        field = VectorField(self.grid, np.ones(self.grid.n_cells))
        weight = make_weight({"kind": "identity", "n": 1}, self.grid)
        with self.assertRaises(InputError):
            weighted_maximal([field, field], [weight], [1], self.cubes)
        with self.assertRaises(InputError):
            weighted_maximal([field], [weight], [np.inf], self.cubes)

    def test_auxiliary_n_identity(self):
        weight = make_weight({"kind": "identity", "n": 1}, self.grid)
        cfg = derived_exponents([2], [1], np.inf)
        values, integral = auxiliary_n([weight], cfg, self.grid.box, self.cubes)
        np.testing.assert_allclose(values, 1.0)
        self.assertAlmostEqual(integral, 1.0)

    def test_strong_type_ratio_of_constant(self):
        field = VectorField(self.grid, np.ones(self.grid.n_cells))
        weight = make_weight({"kind": "identity", "n": 1}, self.grid)
        self.assertAlmostEqual(strong_type_ratio([field], [weight], [1], [2], self.cubes), 1.0)


class TestConvexBodyMaximal(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 1)
        self.field = VectorField(self.grid, np.array([[1.0, 0.0], [0.0, 1.0]]))
        self.left = Cube((0,), Fraction(1, 2))

    def test_union_over_cubes(self):
        body = convex_body_maximal([self.field], [self.grid.box, self.left])
        self.assertAlmostEqual(support(body.bodies[0], [1.0, 0.0]), 1.0)
        self.assertAlmostEqual(support(body.bodies[0], [0.0, 1.0]), 0.5)
        self.assertAlmostEqual(support(body.bodies[1], [1.0, 0.0]), 0.5)

    def test_zero_outside_family(self):
        body = convex_body_maximal([self.field], [self.left])
        self.assertEqual(support(body.bodies[1], [1.0, 1.0]), 0.0)

    def test_bilinear_generator_dimension(self):
        body = convex_body_maximal([self.field, self.field], [self.grid.box])
        self.assertEqual(body.dim, 4)
        self.assertAlmostEqual(support(body.bodies[0], [1.0, 0.0, 0.0, 0.0]), 0.25)

    @settings(deadline=None, max_examples=5)
    @given(st.integers(0, 10 ** 6))
    def test_weak_type_dominates_averages(self, seed):
        grid = Grid.dyadic(1, 3)
        rng = np.random.default_rng(seed)
        field = VectorField(grid, rng.standard_normal((grid.n_cells, 2)))
        weight = make_weight({"kind": "random", "n": 2, "seed": seed}, grid)
        weak, strong = weak_type_check([field], [weight], 2, grid.dyadic_cubes())
        self.assertLessEqual(strong, weak * (1 + 1e-9))


class TestMaximalSparse(unittest.TestCase):
    def test_constant_field_stops_once(self):
        grid = Grid.dyadic(1, 3)
        field = VectorField(grid, np.ones(grid.n_cells))
        result = maximal_sparse_dominate([field], grid.dyadic_cubes())
        self.assertEqual(result.family.cubes, [grid.box])
        self.assertAlmostEqual(result.factor, 1.0)
        self.assertTrue(result.sparse)

    def test_spike(self):
        grid = Grid.dyadic(1, 3)
        values = np.zeros(grid.n_cells)
        values[0] = 8.0
        result = maximal_sparse_dominate([VectorField(grid, values)], grid.dyadic_cubes())
        self.assertEqual(result.family.cubes, [grid.box, Cube((0,), Fraction(1, 4))])
        self.assertAlmostEqual(result.factor, 2.0)
        self.assertLessEqual(result.factor, result.bound)
        self.assertTrue(result.sparse)

    def test_bilinear_scalar_fields_are_sparse(self):
        grid = Grid.dyadic(1, 5)
        rng = np.random.default_rng(11)
        for _ in range(5):
            fields = [VectorField(grid, rng.standard_normal(grid.n_cells)) for _ in range(2)]
            result = maximal_sparse_dominate(fields, grid.dyadic_cubes(), count=50)
            self.assertTrue(result.sparse)
            self.assertLessEqual(result.factor, result.bound)

    @patch("harmonics.maximal.is_martingale_sparse", return_value=False)
    def test_non_sparse_family_raises(self, _):
        grid = Grid.dyadic(1, 3)
        with self.assertRaises(InvariantViolation):
            maximal_sparse_dominate([VectorField(grid, np.ones(grid.n_cells))], grid.dyadic_cubes())

    def test_needs_one_dyadic_grid(self):
        grid = Grid(Cube((0,), 2), 6)
        field = VectorField(grid, np.ones(grid.n_cells))
        with self.assertRaises(InputError):
            maximal_sparse_dominate([field], [Cube((0,), 1), Cube((Fraction(1, 3),), 1)])


if __name__ == '__main__':
    unittest.main()
