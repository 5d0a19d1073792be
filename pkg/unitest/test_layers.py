"""
Description:
Author: hikonv contributors
Date: 2022-04-21 06:58:13
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 06:58:13
"""
import unittest

import numpy as np
import torch

from hikonv.exceptions import InfeasibleGeometry, RangeError, ShapeMismatch
from hikonv.layers import HiKonvConv1d, HiKonvConv2d
from hikonv.op.bitpack_op import QuantSeq
from hikonv.op.config import ConvVariant
from hikonv.op.kernel_op import KernelProbe, Tensor3, Tensor4
from hikonv.op.oracle_op import naive_conv1d, naive_conv2d


class TestLayers(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(6)

    def test_conv1d_layer(self):
        g = QuantSeq([3, 0, 15], 4)
        layer = HiKonvConv1d(g, 32, 32)
        self.assertIs(layer.cfg.mode.variant, ConvVariant.CONV1D)
        self.assertEqual((layer.cfg.n, layer.cfg.k, layer.cfg.s), (3, 3, 10))
        self.assertEqual(layer.ops_per_mult, 13)
        f = QuantSeq.random(self.rng, 97, 4)
        counter = KernelProbe()
        self.assertEqual(layer(f, probe=counter), naive_conv1d(f, g))
        self.assertEqual(counter.wide_mults, 33)
        layer.switch_accumulate_to("unpacked")
        self.assertEqual(layer(f), naive_conv1d(f, g))
        self.assertIn("kernel_size=3", layer.extra_repr())

    def test_conv1d_layer_setters(self):
        g = QuantSeq([1, 2, 3, 1, 2], 2)
        layer = HiKonvConv1d.from_weights(g, 32, 32, in_bit=2)
        wide = layer.cfg
        layer.set_input_bitwidth(6)
        self.assertLess(layer.cfg.ops, wide.ops)
        f = QuantSeq.random(self.rng, 40, 6)
        self.assertEqual(layer(f), naive_conv1d(f, g))
        layer.set_multiplier(64, 64)
        self.assertGreater(layer.cfg.ops, wide.ops)
        with self.assertRaises(RangeError):
            layer.set_weight_bitwidth(1)

    def test_conv1d_layer_without_tiling(self):
        g = QuantSeq([1] * 5, 4)
        with self.assertRaises(InfeasibleGeometry):
            HiKonvConv1d(g, 32, 32, tile_kernel=False)
        layer = HiKonvConv1d(g, 32, 32)
        f = QuantSeq([1] * 9, 4)
        self.assertEqual(layer(f), naive_conv1d(f, g))

    def test_conv2d_layer(self):
        w = Tensor4.random(self.rng, (4, 16, 3, 3), 4, False)
        x = Tensor3.random(self.rng, (16, 7, 8), 4, False)
        layer = HiKonvConv2d(w, 32, 32)
        self.assertEqual(layer.cfg.mode.m, 16)
        self.assertEqual((layer.cfg.g_b, layer.cfg.s, layer.ops_per_mult), (6, 14, 13))
        self.assertEqual((layer.run_accumulate, layer.run_group), ("packed", 16))
        expected = naive_conv2d(x, w)
        self.assertEqual(layer(x), expected)
        layer.switch_accumulate_to("unpacked")
        self.assertEqual(layer.run_accumulate, "unpacked")
        self.assertEqual(layer(x), expected)
        layer.set_group_size(2)
        self.assertEqual(layer.cfg.mode.m, 2)
        self.assertEqual(layer(x), expected)

    def test_conv1d_tensor_io(self):
        layer = HiKonvConv1d(torch.tensor([3, 0, 15]), 32, 32)
        self.assertEqual((layer.in_bit, layer.w_bit), (4, 4))
        f = QuantSeq.random(self.rng, 20, 4)
        y = layer(torch.tensor(f.values))
        self.assertEqual(y.dtype, torch.int64)
        self.assertEqual(y.tolist(), naive_conv1d(f.values, [3, 0, 15]))
        batch = torch.tensor([QuantSeq.random(self.rng, 20, 4).values for _ in range(3)])
        y = layer(batch)
        self.assertEqual(tuple(y.shape), (3, 22))
        for sample, out in zip(batch.tolist(), y.tolist()):
            self.assertEqual(out, naive_conv1d(sample, [3, 0, 15]))
        with self.assertRaises(ShapeMismatch):
            layer(torch.zeros(2, 2, 5, dtype=torch.int64))
        with self.assertRaises(RangeError):
            layer(torch.zeros(5))
        with self.assertRaises(ShapeMismatch):
            HiKonvConv1d(torch.zeros(2, 3, dtype=torch.int64))

    def test_conv2d_tensor_io(self):
        w = Tensor4.random(self.rng, (4, 3, 3, 3), 4, False)
        layer = HiKonvConv2d(torch.from_numpy(w.data), 32, 32)
        self.assertEqual((layer.out_channels, layer.in_channels, layer.kernel_size), (4, 3, 3))
        x = self.rng.integers(0, 16, size=(2, 3, 6, 7))
        y = layer(torch.from_numpy(x))
        self.assertEqual(tuple(y.shape), (2, 4, 4, 5))
        for i in range(2):
            expected = naive_conv2d(Tensor3(x[i], 4, False), w)
            self.assertTrue(np.array_equal(y[i].numpy(), expected.data))
        self.assertTrue(torch.equal(layer(torch.from_numpy(x[0])), y[0]))
        with self.assertRaises(ShapeMismatch):
            layer(torch.zeros(6, 7, dtype=torch.int64))

    def test_weights_are_module_state(self):
        w = Tensor4.random(self.rng, (2, 3, 3, 3), 4, False)
        layer = HiKonvConv2d(w, 32, 32)
        state = layer.state_dict()
        self.assertEqual(list(state), ["weight"])
        self.assertTrue(np.array_equal(state["weight"].numpy(), w.data))
        self.assertEqual(list(layer.parameters()), [])

        other = HiKonvConv2d(torch.zeros(2, 3, 3, 3, dtype=torch.int64), 32, 32)
        other.load_state_dict(state)
        self.assertEqual(other.qweight, w)
        x = Tensor3.random(self.rng, (3, 5, 5), 4, False)
        self.assertEqual(other(x), naive_conv2d(x, w))

        other.load_parameters({"weight": torch.ones(2, 3, 3, 3, dtype=torch.int64)})
        self.assertEqual(int(other.qweight.data.sum()), 54)
        with self.assertRaises(RangeError):
            other.load_parameters({"bias": torch.zeros(2)})
        with self.assertRaises(RangeError):
            other.set_weight(torch.ones(2, 3, 3, 3))
        with self.assertRaises(RangeError):
            other.set_weight(torch.full((2, 3, 3, 3), 16))

    def test_reset_parameters(self):
        layer = HiKonvConv2d(torch.zeros(3, 2, 3, 3, dtype=torch.int64), 32, 32, w_bit=3, signed=True, in_bit=3)
        layer.reset_parameters(random_state=11)
        first = layer.weight.clone()
        self.assertGreaterEqual(int(first.min()), -4)
        self.assertLessEqual(int(first.max()), 3)
        self.assertTrue(np.array_equal(layer.qweight.data, first.numpy()))
        layer.reset_parameters(random_state=11)
        self.assertTrue(torch.equal(layer.weight, first))

    def test_conv2d_signed(self):
        w = Tensor4.random(self.rng, (3, 5, 2, 2), 3, True)
        x = Tensor3.random(self.rng, (5, 6, 6), 5, True)
        layer = HiKonvConv2d.from_weights(w, 27, 18, in_bit=5)
        self.assertTrue(layer.cfg.signed)
        self.assertEqual(layer(x), naive_conv2d(x, w))

    def test_conv2d_falls_back_without_guard_bits(self):
        # an 8-bit port holds one feature, so the kernel rows get no guard bits
        w = Tensor4.random(self.rng, (2, 3, 3, 3), 4, False)
        x = Tensor3.random(self.rng, (3, 6, 6), 4, False)
        layer = HiKonvConv2d(w, 8, 32, group_size=1)
        self.assertEqual((layer.cfg.n, layer.cfg.g_b), (1, 0))
        self.assertEqual(layer.run_accumulate, "unpacked")
        counter = KernelProbe()
        self.assertEqual(layer(x, probe=counter), naive_conv2d(x, w))
        self.assertGreater(counter.wide_mults, 0)


if __name__ == "__main__":
    unittest.main()
