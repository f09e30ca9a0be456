"""
对称凸体与 John 椭球测试
"""

import os
import sys
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

# 添加项目根目录到Python路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from harmonics.convex import (
    BodyField,
    ConvexUnion,
    Ellipsoid,
    MinkowskiSum,
    Scaled,
    SymmetricHull,
    TensorProduct,
    Zonotope,
    aumann_average,
    aumann_average_vectors,
    body_from_json,
    body_norm,
    caratheodory_decompose,
    contains,
    image_norm,
    john_ellipsoid,
    mvee,
    radial,
    segment,
    support,
)
from harmonics.errors import InputError, OutsideHullError
from harmonics.geometry import Cube, Grid
from harmonics.tensor import tensor_vector

SQUARE = np.array([[1.0, 1.0], [1.0, -1.0]])


def random_hull(seed: int, n: int = 2, k: int = 4) -> SymmetricHull:
    return SymmetricHull(np.random.default_rng(seed).normal(size=(k, n)))


class TestSupport(unittest.TestCase):
    def test_ellipsoid(self):
        body = Ellipsoid(np.diag([2.0, 1.0]))
        self.assertAlmostEqual(support(body, [1.0, 0.0]), 2.0)
        self.assertAlmostEqual(body_norm(body), 2.0)

    def test_cross_polytope(self):
        body = SymmetricHull(np.eye(2))
        self.assertAlmostEqual(support(body, [1.0, 1.0]), 1.0)
        self.assertTrue(contains(body, [0.5, 0.5]))
        self.assertFalse(contains(body, [0.6, 0.6]))

    def test_zonotope_is_sum_of_segments(self):
        gens = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        zono = Zonotope(gens)
        summed = MinkowskiSum(tuple(segment(g) for g in gens))
        v = np.array([[0.3, -0.7], [1.0, 2.0]])
        np.testing.assert_allclose(support(zono, v), support(summed, v))
        # 顶点 (2, 2) 是离原点最远的点
        self.assertAlmostEqual(body_norm(zono), 2 * np.sqrt(2))

    def test_scaled_and_union(self):
        body = ConvexUnion((Scaled(3.0, segment([1.0, 0.0])), ball_like()))
        self.assertAlmostEqual(support(body, [1.0, 0.0]), 3.0)
        self.assertAlmostEqual(body_norm(body), 3.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(InputError):
            support(SymmetricHull(np.eye(2)), [1.0, 0.0, 0.0])

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_minkowski_additivity(self, seed):
        a, b = random_hull(seed), random_hull(seed + 1)
        v = np.random.default_rng(seed).normal(size=(5, 2))
        np.testing.assert_allclose(support(MinkowskiSum((a, b)), v),
                                   support(a, v) + support(b, v))

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_support_point_attains(self, seed):
        body = random_hull(seed)
        v = np.random.default_rng(seed).normal(size=2)
        point = body.support_points(v[None, :])[0]
        self.assertAlmostEqual(float(point @ v), support(body, v))
        self.assertTrue(contains(body, point, tol=1e-9))

    def test_json_round_trip(self):
        body = MinkowskiSum((Ellipsoid(np.eye(2)), Scaled(0.5, SymmetricHull(SQUARE))))
        restored = body_from_json(body.to_json())
        v = np.random.default_rng(0).normal(size=(4, 2))
        np.testing.assert_allclose(support(restored, v), support(body, v))


def ball_like() -> Ellipsoid:
    return Ellipsoid(np.eye(2))


class TestRadialAndImage(unittest.TestCase):
    def test_radial_of_square(self):
        body = SymmetricHull(SQUARE)
        self.assertAlmostEqual(radial(body, [1.0, 0.0]), 1.0, places=6)
        self.assertAlmostEqual(radial(body, [2.0, 2.0]), 0.5, places=6)

    def test_radial_outside_span(self):
        self.assertEqual(radial(segment([1.0, 0.0]), [0.0, 1.0]), 0.0)

    def test_image_norm_of_ellipsoid(self):
        body = Ellipsoid(np.diag([1.0, 3.0]))
        self.assertAlmostEqual(image_norm(body, np.diag([2.0, 1.0])), 3.0)


class TestTensorProduct(unittest.TestCase):
    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_support_matches_vertex_products(self, seed):
        k1, k2 = random_hull(seed, 2, 3), random_hull(seed + 7, 3, 2)
        body = TensorProduct((k1, k2))
        vertices = np.array([tensor_vector([a, b]) for a in k1.points for b in k2.points])
        v = np.random.default_rng(seed).normal(size=(6, 6))
        np.testing.assert_allclose(support(body, v), support(SymmetricHull(vertices), v),
                                   rtol=1e-9, atol=1e-12)

    def test_norm_is_product_of_norms(self):
        body = TensorProduct((SymmetricHull(SQUARE), segment([0.0, 2.0])))
        self.assertAlmostEqual(body_norm(body), np.sqrt(2) * 2.0)


class TestJohnEllipsoid(unittest.TestCase):
    def test_mvee_of_square(self):
        h, weights, iterations, converged = mvee(SQUARE)
        self.assertTrue(converged)
        np.testing.assert_allclose(h, 2 * np.eye(2), atol=1e-9)
        np.testing.assert_allclose(weights, [0.5, 0.5])

    def test_square_certificate(self):
        john = john_ellipsoid(SymmetricHull(SQUARE))
        np.testing.assert_allclose(john.A, np.sqrt(2) * np.eye(2), atol=1e-6)
        self.assertAlmostEqual(john.c_out, 1.0, places=6)
        self.assertAlmostEqual(john.c_in, 1 / np.sqrt(2), places=6)
        self.assertFalse(john.degenerate)

    def test_ellipsoid_is_its_own_john(self):
        john = john_ellipsoid(Ellipsoid(np.array([[2.0, 1.0], [0.0, 1.0]])))
        self.assertEqual((john.c_in, john.c_out), (1.0, 1.0))

    def test_degenerate_segment(self):
        john = john_ellipsoid(segment([3.0, 4.0]))
        self.assertTrue(john.degenerate)
        self.assertEqual(john.null_directions.shape, (2, 1))
        np.testing.assert_allclose(john.A @ np.array([0.6, 0.8]), [3.0, 4.0], atol=1e-9)

    @settings(deadline=None, max_examples=15)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_ratio_within_sqrt_n(self, seed):
        john = john_ellipsoid(random_hull(seed, 3, 6))
        self.assertLessEqual(john.ratio, np.sqrt(3) * (1 + 1e-3))


class TestCaratheodory(unittest.TestCase):
    def setUp(self):
        self.points = np.vstack([SQUARE, -SQUARE])

    def test_interior_point(self):
        target = np.array([0.2, -0.5])
        terms = caratheodory_decompose(self.points, target)
        self.assertLessEqual(len(terms), 3)
        self.assertAlmostEqual(sum(t for t, _ in terms), 1.0)
        np.testing.assert_allclose(sum(t * u for t, u in terms), target, atol=1e-9)

    def test_outside_point(self):
        with self.assertRaises(OutsideHullError) as ctx:
            caratheodory_decompose(self.points, [3.0, 0.0])
        self.assertIsNotNone(ctx.exception.direction)
        self.assertGreater(ctx.exception.direction[0], 0)


class TestAumannAverage(unittest.TestCase):
    def test_vectors_give_zonotope(self):
        grid = Grid.dyadic(1, 1)
        values = np.array([[1.0, 0.0], [0.0, 1.0]])
        body = aumann_average_vectors(grid, values, grid.box)
        self.assertAlmostEqual(support(body, [1.0, 1.0]), 1.0)
        self.assertAlmostEqual(support(body, [1.0, -1.0]), 1.0)

    def test_constant_field(self):
        grid = Grid.dyadic(1, 2)
        body = Ellipsoid(np.eye(2))
        self.assertIs(aumann_average(BodyField.constant(grid, body), grid.box), body)

    def test_mixed_field(self):
        grid = Grid.dyadic(1, 1)
        field = BodyField(grid, [Ellipsoid(np.eye(2)), segment([4.0, 0.0])])
        body = aumann_average(field, grid.box)
        self.assertAlmostEqual(support(body, [1.0, 0.0]), 0.5 + 2.0)

    def test_cube_must_align(self):
        grid = Grid.dyadic(1, 1)
        field = BodyField.from_vectors(grid, np.ones((2, 2)))
        with self.assertRaises(InputError):
            aumann_average(field, Cube((0.25,), 0.5))


if __name__ == '__main__':
    unittest.main()
