"""
多线性 Muckenhoupt 特征量测试
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
from harmonics.geometry import Grid
from harmonics.muckenhoupt import (
    averaging_norm_oracle,
    averaging_norm_search,
    bilinear_duality,
    characteristic_on_cube,
    derived_exponents,
    factorization_bound,
    fujii_wilson,
    per_cube_table,
    reducing_characteristic,
    roudenko_characteristic,
    scalar_embedding,
    scalar_reduction,
    symmetry_ratio,
    tensor_monotonicity,
)
from harmonics.weights import MatrixWeightField, make_weight


def random_weights(grid, m, seed):
    return [make_weight({"kind": "random", "n": 2, "lipschitz": 2.0, "seed": seed + 101 * j}, grid)
            for j in range(m)]


class TestDerivedExponents(unittest.TestCase):
    def test_linear_case(self):
        cfg = derived_exponents([4], [2], 4)
        self.assertEqual(cfg.recip_q, 0)
        self.assertEqual(cfg.q, np.inf)
        self.assertEqual(cfg.t, (4.0,))
        self.assertEqual(cfg.rho, 4.0)
        self.assertEqual(cfg.lambdas, (1.0,))

    def test_bilinear_case(self):
        cfg = derived_exponents([2, 2], [1, 1], "inf")
        self.assertEqual(cfg.recip_q, 1)
        self.assertEqual(cfg.recip_t, (Fraction(1, 2), Fraction(1, 2)))
        self.assertEqual(cfg.rho, 0.5)
        self.assertEqual(cfg.kappa, 2.0)
        self.assertEqual(cfg.recip_phat_total, Fraction(1))

    def test_rho_undefined(self):
        cfg = derived_exponents([2], [2], 2)
        self.assertIsNone(cfg.rho)
        self.assertIsNone(cfg.kappa)
        self.assertIsNone(cfg.to_json()["lambda"])

    def test_invalid(self):
        with self.assertRaises(InputError):
            derived_exponents([2], [3], np.inf)
        with self.assertRaises(InputError):
            derived_exponents([4], [2], 2)
        with self.assertRaises(InputError):
            derived_exponents([2, 2], [1], np.inf)
        with self.assertRaises(InputError):
            derived_exponents(["two"], [1], np.inf)


class TestClosedForms(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 1)
        self.weight = MatrixWeightField.from_scalar(self.grid, [1.0, 4.0], "1|4")
        self.cfg = derived_exponents([2], [1], np.inf)

    def test_two_level_weight(self):
        box = self.grid.box
        self.assertAlmostEqual(roudenko_characteristic([self.weight], self.cfg, [box]), 17 / 8)
        self.assertAlmostEqual(reducing_characteristic([self.weight], self.cfg, [box]).value, 17 / 8)
        self.assertAlmostEqual(averaging_norm_oracle([self.weight], [2], box), 17 / 8)

    def test_scalar_oracle_is_holder_extremal(self):
        # n = 1 时对偶极值函数就是 Hölder 等号函数
        value = averaging_norm_search([self.weight], [3], self.grid.box).value
        expected = np.mean([1.0, 64.0]) ** (1 / 3) * np.mean([1.0, 4.0 ** -1.5]) ** (2 / 3)
        self.assertAlmostEqual(value, expected)

    def test_identity_weights(self):
        grid = Grid.dyadic(1, 3)
        weights = [make_weight({"kind": "identity", "n": 2}, grid) for _ in range(2)]
        cfg = derived_exponents([2, 2], [1, 1], np.inf)
        self.assertAlmostEqual(roudenko_characteristic(weights, cfg, grid.dyadic_cubes()), 1.0)
        # 约化算子来自内接多边形, 只精确到网格分辨率
        linear = derived_exponents([2], [1], np.inf)
        self.assertAlmostEqual(reducing_characteristic(weights[:1], linear, [grid.box]).value, 1.0, places=3)

    def test_per_cube_rows(self):
        rows = per_cube_table([self.weight], self.cfg, self.grid.dyadic_cubes(), "roudenko")
        self.assertEqual(len(rows), 3)
        self.assertAlmostEqual(rows[0][1], 17 / 8)
        self.assertAlmostEqual(rows[1][1], 1.0)
        with self.assertRaises(InputError):
            per_cube_table([self.weight], self.cfg, [self.grid.box], "bogus")

    def test_empty_family(self):
        with self.assertRaises(InputError):
            roudenko_characteristic([self.weight], self.cfg, [])

    def test_weight_count_mismatch(self):
        with self.assertRaises(InputError):
            characteristic_on_cube([self.weight, self.weight], self.cfg, self.grid.box)


class TestRelations(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 3)
        self.cubes = self.grid.dyadic_cubes()

    @settings(deadline=None, max_examples=6)
    @given(st.integers(0, 10 ** 6), st.integers(1, 2), st.sampled_from([2, 3, 4]))
    def test_factorization_and_tensor(self, seed, m, p):
        weights = random_weights(self.grid, m, seed)
        cfg = derived_exponents([p] * m, [1] * m, np.inf)
        lhs, rhs, _ = factorization_bound(weights, cfg, self.cubes)
        self.assertLessEqual(lhs, rhs * (1 + 1e-6))
        tensor_value, roudenko = tensor_monotonicity(weights, cfg, self.cubes)
        self.assertLessEqual(tensor_value, roudenko * (1 + 1e-6))

    def test_oracle_below_roudenko(self):
        for k, p in enumerate(([2], [3, 2])):
            weights = random_weights(self.grid, len(p), 40 + k)
            cfg = derived_exponents(p, [1] * len(p), np.inf)
            oracle = averaging_norm_oracle(weights, p, self.grid.box)
            self.assertLessEqual(oracle, characteristic_on_cube(weights, cfg, self.grid.box) + 1e-6)

    def test_scalar_embedding(self):
        weight = random_weights(self.grid, 1, 3)[0]
        units = [[np.array([np.cos(a), np.sin(a)])] for a in np.linspace(0, np.pi, 7)]
        scalar, matrix = scalar_embedding([weight], [2], self.grid.box, units)
        self.assertLessEqual(scalar, matrix * (1 + 1e-9))

    def test_symmetry(self):
        weight = random_weights(self.grid, 1, 8)[0]
        cfg = derived_exponents([2], [1], np.inf)
        forward, backward, ratio = symmetry_ratio(weight, cfg, self.cubes)
        # p = 2, r = 1 时两边指数对称
        self.assertAlmostEqual(ratio, 1.0, places=9)

    def test_bilinear_duality(self):
        weight = random_weights(self.grid, 1, 5)[0]
        linear, bilinear, squared = bilinear_duality(weight, self.grid.box)
        self.assertAlmostEqual(squared, linear ** 2)
        self.assertLessEqual(bilinear, squared * (1 + 1e-6))


class TestScalarReduction(unittest.TestCase):
    def test_two_level_scalar_weight(self):
        grid = Grid.dyadic(1, 1)
        weight = MatrixWeightField.from_scalar(grid, [1.0, 4.0])
        cfg = derived_exponents([2], [1], np.inf)
        value, bound = scalar_reduction(weight, cfg, grid.box, [1.0])
        self.assertAlmostEqual(value, 17 / 8)
        self.assertAlmostEqual(bound, 17 / 8)

    def test_bounded_by_matrix_characteristic(self):
        grid = Grid.dyadic(1, 3)
        cfg = derived_exponents([2], [1], np.inf)
        rng = np.random.default_rng(21)
        for seed in range(5):
            weight = random_weights(grid, 1, seed)[0]
            v = rng.standard_normal(2)
            value, bound = scalar_reduction(weight, cfg, grid.box, v / np.linalg.norm(v))
            self.assertLessEqual(value, bound * (1 + 1e-9))

    def test_invalid_configurations(self):
        grid = Grid.dyadic(1, 2)
        weight = make_weight({"kind": "identity", "n": 2}, grid)
        with self.assertRaises(InputError):
            scalar_reduction(weight, derived_exponents([2, 2], [1, 1], np.inf), grid.box, [1.0, 0.0])
        with self.assertRaises(InputError):
            scalar_reduction(weight, derived_exponents([2], [2], 2), grid.box, [1.0, 0.0])


class TestFujiiWilson(unittest.TestCase):
    def test_constant_weight(self):
        grid = Grid.dyadic(2, 3)
        self.assertEqual(fujii_wilson(np.full(grid.n_cells, 2.5), grid.box, grid), 1.0)

    def test_two_cells(self):
        grid = Grid.dyadic(1, 1)
        weight = MatrixWeightField.from_scalar(grid, [1.0, 3.0])
        self.assertAlmostEqual(fujii_wilson(weight, grid.box), 1.25)

    def test_zero_mass(self):
        grid = Grid.dyadic(1, 2)
        with self.assertRaises(InputError):
            fujii_wilson(np.zeros(grid.n_cells), grid.box, grid)

    def test_needs_grid_for_arrays(self):
        with self.assertRaises(InputError):
            fujii_wilson(np.ones(4), Grid.dyadic(1, 2).box)


if __name__ == '__main__':
    unittest.main()
