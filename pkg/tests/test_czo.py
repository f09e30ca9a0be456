"""
多线性 Calderón–Zygmund 算子测试
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

from harmonics.convex import support
from harmonics.czo import (
    DiscreteOperator,
    apply_czo,
    check_kernel,
    convex_sparse_operator,
    cotlar_constant,
    cz_decompose,
    dini,
    endpoint_constant,
    grand_maximal,
    nondegeneracy_check,
    nondegeneracy_constant,
    pointwise_constant,
    riesz_kernel,
    sparse_dominate,
    weighted_bound_table,
    zero_kernel,
)
from harmonics.errors import DivergenceError, InputError
from harmonics.geometry import Cube, Grid
from harmonics.maximal import VectorField
from harmonics.weights import make_weight

UNIT = Cube((0,), 1)


def riesz_grid(level: int) -> Grid:
    """[-1, 2), 单位区间上 2^level 个格子"""
    return Grid(Cube((-1,), 3), 3 << level)


class TestKernels(unittest.TestCase):
    def test_riesz_values(self):
        self.assertAlmostEqual(float(riesz_kernel(1, 1)(np.zeros(1), np.ones(1))), -1.0)
        self.assertAlmostEqual(float(riesz_kernel(2, 1)(np.zeros(1), np.ones(1), np.ones(1))), -0.25)
        self.assertEqual(float(riesz_kernel(1, 1)(np.ones(1), np.ones(1))), 0.0)

    def test_riesz_constants(self):
        kernel = riesz_kernel(1, 1)
        self.assertEqual(kernel.size_constant, 1.0)
        self.assertAlmostEqual(kernel.dini_value, 12.0, places=6)
        self.assertEqual(riesz_kernel(2, 1).size_constant, 4.0)

    def test_invalid_kernel(self):
        with self.assertRaises(InputError):
            riesz_kernel(0, 1)

    def test_size_and_smoothness(self):
        rng = np.random.default_rng(0)
        report = check_kernel(riesz_kernel(1, 1), 500, rng)
        self.assertLessEqual(report["size_ratio"], 1 + 1e-9)
        self.assertLessEqual(report["smooth_ratio"], 1.0)
        self.assertAlmostEqual(report["doubling_ratio"], 1.0)
        bilinear = check_kernel(riesz_kernel(2, 1), 500, rng)
        self.assertLessEqual(bilinear["size_ratio"], 1 + 1e-9)


class TestDini(unittest.TestCase):
    def test_linear_modulus(self):
        self.assertAlmostEqual(dini(lambda t: t), 1.0, places=8)

    def test_square_root_modulus(self):
        self.assertAlmostEqual(dini(np.sqrt), 2.0, places=8)

    def test_constant_modulus_diverges(self):
        with self.assertRaises(DivergenceError):
            dini(lambda t: np.ones_like(t))

    def test_zero_modulus(self):
        self.assertEqual(dini(lambda t: np.zeros_like(t)), 0.0)


class TestDiscreteOperator(unittest.TestCase):
    def test_logarithm_at_boundary_point(self):
        grid = Grid(Cube((0,), 4), 256)
        f = grid.mask(Cube((1,), 1)).astype(float)
        value = apply_czo(riesz_kernel(1, 1), [f], (0.0,), grid)
        self.assertAlmostEqual(float(value[0]), -np.log(2), places=3)

    def test_zero_kernel(self):
        grid = Grid.dyadic(1, 4)
        f = np.random.default_rng(1).standard_normal(grid.n_cells)
        op = DiscreteOperator(zero_kernel(2, 1), grid)
        values = op.apply_all([f[:, None], f[:, None]])
        np.testing.assert_array_equal(values, 0.0)

    def test_target_cell_is_skipped(self):
        grid = Grid.dyadic(1, 3)
        f = np.zeros(grid.n_cells)
        f[2] = 1.0
        self.assertEqual(float(apply_czo(riesz_kernel(1, 1), [f], 2, grid)[0]), 0.0)

    @settings(deadline=None, max_examples=10)
    @given(st.integers(0, 10 ** 6))
    def test_vector_output_is_tensor(self, seed):
        grid = Grid.dyadic(1, 3)
        rng = np.random.default_rng(seed)
        f, g = rng.standard_normal((grid.n_cells, 2)), rng.standard_normal((grid.n_cells, 3))
        value = apply_czo(riesz_kernel(2, 1), [VectorField(grid, f), VectorField(grid, g)], 5)
        self.assertEqual(value.shape, (6,))
        # 第 (0, 0) 分量等于数量算子作用在第一分量上
        scalar = apply_czo(riesz_kernel(2, 1), [f[:, 0], g[:, 0]], 5, grid)
        self.assertAlmostEqual(float(value[0]), float(scalar[0]))

    def test_dimension_mismatch(self):
        with self.assertRaises(InputError):
            DiscreteOperator(riesz_kernel(1, 2), Grid.dyadic(1, 2))


class TestGrandMaximal(unittest.TestCase):
    def setUp(self):
        self.grid = riesz_grid(3)
        self.f = self.grid.mask(UNIT).astype(float)

    def test_zero_kernel(self):
        values = grand_maximal(zero_kernel(1, 1), [self.f], self.grid.dyadic_cubes(UNIT), grid=self.grid)
        np.testing.assert_array_equal(values, 0.0)

    def test_localized(self):
        cubes = self.grid.dyadic_cubes(UNIT)
        values = grand_maximal(riesz_kernel(1, 1), [self.f], cubes, localized_at=UNIT, grid=self.grid)
        self.assertTrue(np.all(values >= 0))
        outside = np.ones(self.grid.n_cells, dtype=bool)
        outside[self.grid.cells_in(UNIT)] = False
        np.testing.assert_array_equal(values[outside], 0.0)

    def test_localized_needs_triple(self):
        with self.assertRaises(InputError):
            grand_maximal(riesz_kernel(1, 1), [self.f], [UNIT], localized_at=Cube((-1,), 1), grid=self.grid)


class TestCZDecomposition(unittest.TestCase):
    def setUp(self):
        self.grid = Grid.dyadic(1, 2)
        self.f = np.array([4.0, 0.0, 0.0, 0.0])

    def test_selects_maximal_cubes(self):
        cz = cz_decompose(self.grid, self.f, 1.0)
        self.assertEqual(cz.cubes, [Cube((0,), Fraction(1, 2))])
        np.testing.assert_allclose(cz.good, [2, 2, 0, 0])
        np.testing.assert_allclose(cz.reconstruct(), self.f)

    def test_higher_threshold(self):
        cz = cz_decompose(self.grid, self.f, 2.0)
        self.assertEqual(cz.cubes, [Cube((0,), Fraction(1, 4))])
        self.assertLessEqual(np.abs(cz.good).max(), 2 * 2.0)

    def test_bad_parts_have_mean_zero(self):
        f = np.random.default_rng(3).standard_normal(16) * 5
        grid = Grid.dyadic(1, 4)
        cz = cz_decompose(grid, f, float(np.abs(f).mean()))
        for q, b in cz.bad.items():
            self.assertAlmostEqual(float(b[grid.cells_in(q)].mean()), 0.0)
            self.assertFalse(np.any(b[~grid.mask(q)]))
        np.testing.assert_allclose(cz.reconstruct(), f)

    def test_invalid_height(self):
        with self.assertRaises(InputError):
            cz_decompose(self.grid, self.f, 0.0)
        with self.assertRaises(InputError):
            cz_decompose(self.grid, self.f, 0.5)


class TestSparseDomination(unittest.TestCase):
    def test_zero_function(self):
        grid = riesz_grid(3)
        result = sparse_dominate(riesz_kernel(1, 1), [np.zeros(grid.n_cells)], UNIT, grid)
        self.assertEqual(result.stopping.cubes, [UNIT])
        self.assertEqual(result.constant, 0.0)
        self.assertTrue(result.martingale and result.eta_sparse)

    def test_indicator(self):
        grid = riesz_grid(3)
        f = grid.mask(UNIT).astype(float)
        result = sparse_dominate(riesz_kernel(1, 1), [f], UNIT, grid)
        self.assertTrue(result.martingale)
        self.assertTrue(result.eta_sparse)
        self.assertTrue(np.isfinite(result.constant))
        self.assertEqual(result.triples.cubes[0], UNIT.triple())
        parallel = sparse_dominate(riesz_kernel(1, 1), [f], UNIT, grid, workers=2)
        self.assertEqual(parallel.stopping.cubes, result.stopping.cubes)
        self.assertEqual(parallel.constant, result.constant)

    def test_support_outside_top(self):
        grid = riesz_grid(2)
        with self.assertRaises(InputError):
            sparse_dominate(riesz_kernel(1, 1), [np.ones(grid.n_cells)], UNIT, grid)

    def test_box_must_contain_triple(self):
        grid = Grid.dyadic(1, 3)
        with self.assertRaises(InputError):
            sparse_dominate(riesz_kernel(1, 1), [np.zeros(grid.n_cells)], UNIT, grid)

    def test_convex_sparse_operator_adds(self):
        grid = Grid.dyadic(1, 1)
        field = VectorField(grid, np.array([[1.0, 0.0], [0.0, 1.0]]))
        left = Cube((0,), Fraction(1, 2))
        body = convex_sparse_operator([field], [grid.box, left])
        self.assertAlmostEqual(support(body.bodies[0], [1.0, 0.0]), 1.5)
        self.assertAlmostEqual(support(body.bodies[1], [1.0, 0.0]), 0.5)
        self.assertAlmostEqual(support(body.bodies[1], [0.0, 1.0]), 0.5)


class TestNondegeneracy(unittest.TestCase):
    def test_constants(self):
        self.assertEqual(nondegeneracy_constant(1, 1), 3.0)
        self.assertAlmostEqual(nondegeneracy_constant(2, 1), 5 / 6)

    def test_riesz_line(self):
        grid = Grid(Cube((0,), 4), 4 << 4)
        report = nondegeneracy_check(riesz_kernel(1, 1), grid, UNIT, 0.5)
        self.assertGreaterEqual(report.property_a_min, 1.0)
        self.assertLess(report.property_b_max, 1.0)
        self.assertEqual(report.samples, 1)

    def test_invalid_alpha(self):
        grid = Grid(Cube((0,), 4), 16)
        with self.assertRaises(InputError):
            nondegeneracy_check(riesz_kernel(1, 1), grid, UNIT, 1.0)

    def test_partner_outside(self):
        with self.assertRaises(InputError):
            nondegeneracy_check(riesz_kernel(1, 1), Grid.dyadic(1, 3), UNIT, 0.5)


class TestDiagnostics(unittest.TestCase):
    def setUp(self):
        self.grid = riesz_grid(3)
        self.f = np.zeros(self.grid.n_cells)
        self.f[self.grid.cells_in(UNIT)] = np.random.default_rng(2).exponential(1.0, 8)

    def test_endpoint(self):
        self.assertEqual(endpoint_constant(riesz_kernel(1, 1), [np.zeros(self.grid.n_cells)], self.grid), 0.0)
        value = endpoint_constant(riesz_kernel(1, 1), [self.f], self.grid)
        self.assertTrue(0 < value < np.inf)

    def test_cotlar_and_pointwise(self):
        kernel = riesz_kernel(1, 1)
        cubes = self.grid.dyadic_cubes(UNIT)
        self.assertTrue(np.isfinite(cotlar_constant(kernel, [self.f], self.grid, cubes)))
        self.assertTrue(np.isfinite(pointwise_constant(kernel, [self.f], self.grid, UNIT)))

    def test_weighted_bound_with_identity(self):
        grid = Grid.dyadic(1, 3)
        weight = make_weight({"kind": "identity", "n": 1}, grid)
        field = VectorField(grid, np.random.default_rng(4).standard_normal(grid.n_cells))
        rows = weighted_bound_table(riesz_kernel(1, 1), [field], [weight], [2],
                                    [[grid.box], grid.dyadic_cubes()])
        self.assertEqual(len(rows), 2)
        for row in rows:
            self.assertAlmostEqual(row["characteristic"], 1.0)
            self.assertAlmostEqual(row["constant"], row["ratio"])


if __name__ == '__main__':
    unittest.main()
