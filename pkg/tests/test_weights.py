"""
矩阵权与约化算子测试
"""

import os
import sys
import unittest
from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

# 添加项目根目录到Python路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from harmonics.errors import InputError
from harmonics.geometry import Cube, Grid
from harmonics.weights import (
    MatrixWeightField,
    average_norms,
    clear_cache,
    make_weight,
    matrix_reducing_norms,
    power_mean,
    quasi_constant,
    reciprocal,
    reducing_operator,
    tensor_weight,
)


class TestExponents(unittest.TestCase):
    def test_reciprocal(self):
        self.assertEqual(reciprocal("inf"), 0)
        self.assertEqual(reciprocal(float("inf")), 0)
        self.assertEqual(reciprocal(2), Fraction(1, 2))
        self.assertEqual(reciprocal(0.5), 2)
        with self.assertRaises(InputError):
            reciprocal(0)

    def test_power_mean(self):
        values = np.array([1.0, 4.0])
        self.assertAlmostEqual(float(power_mean(values, 1)), 2.5)
        self.assertAlmostEqual(float(power_mean(values, Fraction(1, 2))), np.sqrt(8.5))
        self.assertAlmostEqual(float(power_mean(values, 0)), 4.0)
        self.assertAlmostEqual(float(power_mean(values, -1)), 1.6)

    def test_quasi_constant(self):
        self.assertEqual(quasi_constant(2), 1.0)
        self.assertEqual(quasi_constant(0.5), 2.0)


class TestMatrixWeightField(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 2)

    def test_rejects_asymmetric(self):
        values = np.tile(np.array([[1.0, 0.5], [0.0, 1.0]]), (4, 1, 1))
        with self.assertRaises(InputError):
            MatrixWeightField(self.grid, values)

    def test_rejects_singular(self):
        values = np.tile(np.diag([1.0, 0.0]), (4, 1, 1))
        with self.assertRaises(InputError):
            MatrixWeightField(self.grid, values)

    def test_rejects_wrong_cell_count(self):
        with self.assertRaises(InputError):
            MatrixWeightField.from_scalar(self.grid, [1.0, 2.0])

    def test_inverse(self):
        weight = make_weight({"kind": "random", "n": 3, "seed": 4}, self.grid)
        product = weight.values @ weight.inverse().values
        np.testing.assert_allclose(product, np.tile(np.eye(3), (4, 1, 1)), atol=1e-9)
        self.assertIs(weight.inverse().inverse(), weight)

    def test_make_weight_kinds(self):
        identity = make_weight({"kind": "identity", "n": 2, "scale": 3}, self.grid)
        np.testing.assert_allclose(identity.values[0], 3 * np.eye(2))
        power = make_weight({"kind": "scalar_power", "alpha": 0.5}, self.grid)
        self.assertAlmostEqual(power.scalar[0], np.sqrt(0.125))
        rotating = make_weight({"kind": "rotating", "alphas": [0.5, -0.5], "x0": [-1.0]}, self.grid)
        self.assertEqual(rotating.n, 2)
        with self.assertRaises(InputError):
            make_weight({"kind": "banana"}, self.grid)

    def test_tensor_weight(self):
        a = make_weight({"kind": "constant", "matrix": [[2.0, 0.0], [0.0, 1.0]]}, self.grid)
        b = make_weight({"kind": "identity", "n": 3}, self.grid)
        product = tensor_weight([a, b])
        self.assertEqual(product.n, 6)
        np.testing.assert_allclose(product.values[1], np.kron(a.values[1], b.values[1]))

    def test_average_norms(self):
        weight = MatrixWeightField.from_scalar(self.grid, [1.0, 1.0, 4.0, 4.0])
        half = Cube((0,), Fraction(1, 2))
        self.assertAlmostEqual(float(average_norms(weight, half, 2, np.ones((1, 1)))[0]), 1.0)
        value = float(average_norms(weight, self.grid.box, 1, np.ones((1, 1)))[0])
        self.assertAlmostEqual(value, 2.5)


class TestReducingOperator(unittest.TestCase):
    def setUp(self):
        clear_cache()
        self.grid = Grid.dyadic(1, 3)

    def test_scalar_weight_is_exact(self):
        weight = MatrixWeightField.from_scalar(Grid.dyadic(1, 1), [1.0, 4.0])
        op = reducing_operator(weight, weight.grid.box, 2)
        self.assertAlmostEqual(float(op.A[0, 0]), np.sqrt(8.5))
        self.assertEqual(op.slack, 0.0)

    def test_constant_weight(self):
        weight = make_weight({"kind": "constant", "matrix": [[2.0, 0.0], [0.0, 1.0]]}, self.grid)
        op = reducing_operator(weight, self.grid.box, 2)
        np.testing.assert_allclose(op.A, np.diag([2.0, 1.0]), rtol=1e-2, atol=1e-2)
        self.assertFalse(op.degenerate)

    def test_cache(self):
        weight = make_weight({"kind": "random", "n": 2, "seed": 1}, self.grid)
        first = reducing_operator(weight, self.grid.box, 2)
        self.assertIs(reducing_operator(weight, self.grid.box, 2), first)
        self.assertIsNot(reducing_operator(weight, self.grid.box, 2, use_cache=False), first)

    @settings(deadline=None, max_examples=10)
    @given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, "inf"]))
    def test_convex_sandwich(self, seed, p):
        weight = make_weight({"kind": "random", "n": 2, "seed": seed}, self.grid)
        op = reducing_operator(weight, self.grid.box, p, use_cache=False)
        # p >= 1 时 q 是范数, 下界不丢常数
        self.assertGreaterEqual(op.lower_ratio, 1 - 1e-9)
        self.assertLessEqual(op.upper_ratio, np.sqrt(2) * 1.05)
        lower, upper = op.sandwich()
        self.assertLessEqual(lower, op.lower_ratio + 1e-12)
        self.assertGreaterEqual(upper, op.upper_ratio - 1e-12)

    def test_quasi_norm_sandwich(self):
        weight = make_weight({"kind": "rotating", "alphas": [0.3, -0.3], "x0": [-0.5]}, self.grid)
        op = reducing_operator(weight, self.grid.box, 0.5)
        lower, upper = op.sandwich()
        self.assertLessEqual(lower, op.lower_ratio + 1e-12)
        self.assertGreaterEqual(upper, op.upper_ratio - 1e-12)

    def test_matrix_norms(self):
        weight = make_weight({"kind": "random", "n": 2, "seed": 9}, self.grid)
        matrix = np.random.default_rng(2).normal(size=(2, 2))
        lhs, rhs, lower, upper = matrix_reducing_norms(weight, self.grid.box, 2, matrix)
        self.assertLessEqual(lower * rhs, lhs * (1 + 1e-9))
        self.assertLessEqual(lhs, upper * rhs * (1 + 1e-9))

    def test_negative_exponent(self):
        weight = make_weight({"kind": "identity", "n": 2}, self.grid)
        with self.assertRaises(InputError):
            reducing_operator(weight, self.grid.box, -2)


if __name__ == '__main__':
    unittest.main()
