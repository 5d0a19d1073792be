"""
Description:
Author: hikonv contributors
Date: 2022-04-21 06:10:55
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 06:10:55
"""
import unittest

import numpy as np

from hikonv.exceptions import ShapeMismatch
from hikonv.op.kernel_op import Tensor3, Tensor4
from hikonv.op.oracle_op import (
    count_naive_conv2d_mults,
    count_naive_ops,
    naive_conv1d,
    naive_conv2d,
    reference_conv1d,
    reference_conv2d,
)


class TestOracle(unittest.TestCase):
    def test_naive_conv1d(self):
        self.assertEqual(naive_conv1d([1, 2], [1, 1]), [1, 3, 2])
        self.assertEqual(naive_conv1d([7, 11], [5, 0, 9]), [35, 55, 63, 99])
        self.assertEqual(naive_conv1d([-2, 3], [-1, 2]), [2, -7, 6])

    def test_count_naive_ops(self):
        self.assertEqual(count_naive_ops(9, 4), (36, 24))
        self.assertEqual(count_naive_ops(8, 3), (24, 14))
        self.assertEqual(count_naive_ops(1, 1), (1, 0))
        self.assertEqual(count_naive_conv2d_mults(16, 16, 12, 12, 3), 16 * 16 * 9 * 100)

    def test_conv1d_matches_torch(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            f = rng.integers(-128, 128, size=int(rng.integers(1, 300))).tolist()
            g = rng.integers(-128, 128, size=int(rng.integers(1, 12))).tolist()
            self.assertEqual(naive_conv1d(f, g), reference_conv1d(f, g))

    def test_conv2d_matches_torch(self):
        rng = np.random.default_rng(4)
        x = Tensor3(rng.integers(-8, 8, size=(3, 7, 9)), 4, True)
        w = Tensor4(rng.integers(-8, 8, size=(4, 3, 3, 3)), 4, True)
        y = naive_conv2d(x, w)
        self.assertEqual(y.dims, (4, 5, 7))
        self.assertEqual((y.bitwidth, y.signed), (32, True))
        self.assertEqual(y, reference_conv2d(x, w))

    def test_conv2d_is_correlation(self):
        x = Tensor3(np.arange(9).reshape(1, 3, 3), 4, False)
        w = Tensor4(np.array([[[[1, 0], [0, 2]]]]), 2, False)
        # out[h][w] = x[h][w] + 2 * x[h+1][w+1]
        self.assertEqual(naive_conv2d(x, w).data.tolist(), [[[8, 11], [17, 20]]])

    def test_conv2d_shape_errors(self):
        x = Tensor3(np.zeros((2, 4, 4)), 4, False)
        with self.assertRaises(ShapeMismatch):
            naive_conv2d(x, Tensor4(np.zeros((1, 3, 3, 3)), 4, False))
        with self.assertRaises(ShapeMismatch):
            naive_conv2d(x, Tensor4(np.zeros((1, 2, 5, 5)), 4, False))
        with self.assertRaises(ShapeMismatch):
            reference_conv2d(x, Tensor4(np.zeros((1, 3, 3, 3)), 4, False))


if __name__ == "__main__":
    unittest.main()
