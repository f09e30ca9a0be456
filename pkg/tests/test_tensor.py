"""
张量积线性代数测试
"""

import os
import sys
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

# 添加项目根目录到Python路径
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from harmonics.errors import InputError
from harmonics.tensor import (
    TensorSpace,
    batched_kron,
    column_norm_bounds,
    iterated_contraction,
    operator_norm,
    partial_contraction,
    tensor_matrix,
    tensor_vector,
)


class TestTensorSpace(unittest.TestCase):
    def test_row_major_index(self):
        space = TensorSpace((2, 3))
        self.assertEqual(space.n, 6)
        self.assertEqual(space.flatten((1, 2)), 5)
        self.assertEqual(space.unflatten(4), (1, 1))

    def test_basis_vector_is_tensor_of_basis(self):
        space = TensorSpace((2, 3))
        expected = tensor_vector([np.eye(2)[1], np.eye(3)[0]])
        np.testing.assert_array_equal(space.basis_vector((1, 0)), expected)

    def test_invalid_dims(self):
        with self.assertRaises(InputError):
            TensorSpace((2, 0))
        with self.assertRaises(InputError):
            TensorSpace(())


class TestKronecker(unittest.TestCase):
    @settings(deadline=None, max_examples=40)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_mixed_product(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(2, 2)), rng.normal(size=(3, 3))
        u, v = rng.normal(size=2), rng.normal(size=3)
        np.testing.assert_allclose(tensor_matrix(a, b) @ tensor_vector([u, v]),
                                   tensor_vector([a @ u, b @ v]), atol=1e-10)

    def test_norm_is_multiplicative(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        self.assertAlmostEqual(operator_norm(tensor_matrix(a, b)),
                               operator_norm(a) * operator_norm(b))

    def test_non_square_factor(self):
        with self.assertRaises(InputError):
            tensor_matrix(np.ones((2, 3)))

    def test_batched_kron_matches_kron(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(4, 2, 2)), rng.normal(size=(4, 3, 3))
        out = batched_kron(a, b)
        for c in range(4):
            np.testing.assert_allclose(out[c], np.kron(a[c], b[c]))


class TestContraction(unittest.TestCase):
    def setUp(self):
        self.space = TensorSpace((2, 3, 2))
        self.rng = np.random.default_rng(11)

    def test_suffix_contraction_of_pure_tensor(self):
        u1, u2, u3 = (self.rng.normal(size=n) for n in self.space.dims)
        v3 = self.rng.normal(size=2)
        out = partial_contraction(self.space, tensor_vector([u1, u2, u3]), [v3])
        np.testing.assert_allclose(out, tensor_vector([u1, u2]) * float(u3 @ v3))

    def test_prefix_contraction_of_pure_tensor(self):
        u1, u2, u3 = (self.rng.normal(size=n) for n in self.space.dims)
        v1, v2 = self.rng.normal(size=2), self.rng.normal(size=3)
        out = partial_contraction(self.space, tensor_vector([u1, u2, u3]), [v1, v2], "prefix")
        np.testing.assert_allclose(out, u3 * float(u1 @ v1) * float(u2 @ v2))

    def test_iterated_equals_inner_product(self):
        u = self.rng.normal(size=self.space.n)
        vs = [self.rng.normal(size=n) for n in self.space.dims]
        self.assertAlmostEqual(iterated_contraction(self.space, u, vs),
                               float(u @ tensor_vector(vs)))

    def test_rejects_middle_block(self):
        u = np.zeros(self.space.n)
        with self.assertRaises(InputError):
            partial_contraction(self.space, u, [np.zeros(3)], "middle")
        with self.assertRaises(InputError):
            partial_contraction(self.space, u, [np.zeros(3)])

    def test_rejected_block_is_logged(self):
        u = np.zeros(self.space.n)
        with self.assertLogs("tensor", level="ERROR") as logs:
            with self.assertRaises(InputError):
                partial_contraction(self.space, u, [np.zeros(3)], "middle")
        self.assertIn("middle", logs.output[0])


class TestColumnNorms(unittest.TestCase):
    @settings(deadline=None, max_examples=40)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 6))
    def test_equivalence(self, seed, n):
        a = np.random.default_rng(seed).normal(size=(n, n))
        low, high = column_norm_bounds(a)
        norm = operator_norm(a)
        self.assertLessEqual(low, norm * (1 + 1e-9))
        self.assertLessEqual(norm, high * (1 + 1e-9))


if __name__ == '__main__':
    unittest.main()
