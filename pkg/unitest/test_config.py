"""
Description:
Author: hikonv contributors
Date: 2022-04-21 05:02:18
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 05:02:18
"""
import itertools
import os
import unittest

import hypothesis.strategies as st
from hypothesis import given, settings

from hikonv.exceptions import InfeasibleGeometry, RangeError
from hikonv.op.config import (
    ConvMode,
    ConvVariant,
    HiKonvConfig,
    ceil_log2,
    check_feasible,
    format_throughput_csv,
    guard_bits,
    max_group_size,
    ops_per_mult,
    packed_width,
    search_optimal,
    slice_size,
    throughput_table,
)

# bitwidth: (n, k, s, g_b, ops) of the single-product optimum
DSP48E2_DIAGONAL = {
    1: (9, 4, 3, 2, 60),
    2: (5, 3, 6, 2, 23),
    3: (4, 2, 7, 1, 11),
    4: (3, 2, 9, 1, 8),
    5: (3, 2, 11, 1, 8),
    6: (2, 1, 12, 0, 2),
    7: (2, 1, 14, 0, 2),
    8: (2, 1, 16, 0, 2),
}
GPP32_DIAGONAL = {
    1: (8, 8, 4, 3, 113),
    2: (5, 5, 7, 3, 41),
    3: (4, 4, 8, 2, 25),
    4: (3, 3, 10, 2, 13),
    5: (3, 3, 12, 2, 13),
    6: (3, 2, 13, 1, 8),
    7: (2, 2, 15, 1, 5),
    8: (2, 2, 17, 1, 5),
}


def _summary(cfg: HiKonvConfig):
    return cfg.n, cfg.k, cfg.s, cfg.g_b, cfg.ops


def _golden(name: str) -> str:
    with open(os.path.join(os.path.dirname(__file__), "golden", name)) as f:
        return f.read()


def _brute_force(bit_a, bit_b, p, q, variant, m=1, signed=False):
    """(ops, n, k, s, g_b) of the best packing, scanning every lane count pair."""
    best = None
    for n in range(1, bit_a + 1):
        for k in range(1, bit_b + 1):
            terms = {"single": min(n, k), "conv1d": k, "dnn": m * min(n, k)}[variant]
            g_b = (terms - 1).bit_length()
            s = g_b + (q if p == 1 else p if q == 1 else p + q)
            sign = 1 if signed else 0
            a_bits = p + (n - 1) * s + (sign if n > 1 else 0)
            b_bits = q + (k - 1) * s + (sign if k > 1 else 0)
            if a_bits > bit_a or b_bits > bit_b:
                continue
            candidate = (n * k + (n - 1) * (k - 1), n, k, s, g_b)
            if best is None or candidate[:3] > best[:3]:
                best = candidate
    return best


class TestConfig(unittest.TestCase):
    def test_ceil_log2(self):
        self.assertEqual([ceil_log2(x) for x in (1, 2, 3, 4, 5, 8, 9)], [0, 1, 2, 2, 3, 3, 4])

    def test_slice_size_binary_operands(self):
        self.assertEqual(slice_size(1, 4, 2), 6)
        self.assertEqual(slice_size(4, 1, 2), 6)
        self.assertEqual(slice_size(1, 1, 2), 3)
        self.assertEqual(slice_size(3, 4, 2), 9)

    def test_guard_bits_per_mode(self):
        self.assertEqual(guard_bits(ConvMode.single(), 9, 4), 2)
        self.assertEqual(guard_bits(ConvMode.conv1d(), 2, 5), 3)
        self.assertEqual(guard_bits(ConvMode.dnn(21), 3, 3), 6)

    def test_ops_per_mult(self):
        self.assertEqual(ops_per_mult(9, 4), 60)
        self.assertEqual(ops_per_mult(1, 1), 1)

    def test_dsp48e2_diagonal(self):
        for bits, expected in DSP48E2_DIAGONAL.items():
            cfg = search_optimal(27, 18, bits, bits, ConvMode.single())
            self.assertEqual(_summary(cfg), expected, msg=f"{bits}-bit")

    def test_gpp32_diagonal(self):
        for bits, expected in GPP32_DIAGONAL.items():
            cfg = search_optimal(32, 32, bits, bits, ConvMode.single())
            self.assertEqual(_summary(cfg), expected, msg=f"{bits}-bit")

    def test_conv1d_mode(self):
        cfg = search_optimal(32, 32, 4, 4, ConvMode.conv1d())
        self.assertEqual((cfg.n, cfg.k, cfg.g_b, cfg.s), (3, 3, 2, 10))

    def test_str(self):
        cfg = search_optimal(27, 18, 1, 1)
        self.assertEqual(str(cfg), "n=9 k=4 s=3 gb=2 ops=60")
        self.assertEqual(cfg.as_dict(), {"n": 9, "k": 4, "s": 3, "gb": 2, "ops": 60})
        self.assertEqual(cfg.segments, 12)

    def test_max_group_size(self):
        self.assertEqual(max_group_size(32, 32, 4, 4), 21)
        self.assertEqual(max_group_size(32, 32, 4, 4, limit=8), 8)
        cfg = search_optimal(32, 32, 4, 4, ConvMode.dnn(21))
        self.assertEqual((cfg.g_b, cfg.s, cfg.ops), (6, 14, 13))
        self.assertLess(search_optimal(32, 32, 4, 4, ConvMode.dnn(22)).ops, 13)

    def test_ops_non_increasing_in_group_size(self):
        previous = search_optimal(32, 32, 3, 3, ConvMode.dnn(1)).ops
        for m in range(2, 200, 7):
            ops = search_optimal(32, 32, 3, 3, ConvMode.dnn(m)).ops
            self.assertLessEqual(ops, previous)
            previous = ops

    def test_check_feasible(self):
        self.assertTrue(check_feasible(HiKonvConfig.build(32, 32, 4, 4, 3, 3)))
        self.assertFalse(check_feasible(HiKonvConfig.build(32, 32, 4, 4, 4, 3)))
        # guard bits smaller than the mode needs
        self.assertFalse(check_feasible(HiKonvConfig(32, 32, 4, 4, 2, 3, 11, 3)))

    def test_infeasible_and_out_of_range(self):
        with self.assertRaises(InfeasibleGeometry):
            search_optimal(4, 4, 8, 8)
        with self.assertRaises(InfeasibleGeometry):
            search_optimal(65, 32, 4, 4)
        with self.assertRaises(RangeError):
            search_optimal(32, 32, 9, 4)
        with self.assertRaises(RangeError):
            search_optimal(32, 32, 1, 4, signed=True)
        with self.assertRaises(RangeError):
            HiKonvConfig(32, 32, 4, 4, 0, 3, 10, 2)

    def test_conv_mode(self):
        self.assertEqual(ConvMode.parse("DNN", 4), ConvMode.dnn(4))
        self.assertEqual(ConvMode.parse("dnn").m, 1)
        self.assertIs(ConvMode.parse("conv1d").variant, ConvVariant.CONV1D)
        self.assertEqual(str(ConvMode.dnn(3)), "dnn(m=3)")
        with self.assertRaises(RangeError):
            ConvMode.dnn(0)
        with self.assertRaises(RangeError):
            ConvMode(ConvVariant.SINGLE, 3)
        with self.assertRaises(RangeError):
            ConvMode.parse("conv3d")

    def test_gpp32_binary_is_113_not_128(self):
        # the headline count of 128 binary operations per 32-bit product is not reachable
        cfg = search_optimal(32, 32, 1, 1)
        self.assertEqual((cfg.n, cfg.k, cfg.ops), (8, 8, 113))
        self.assertNotEqual(cfg.ops, 128)
        self.assertEqual(_brute_force(32, 32, 1, 1, "single")[0], 113)

    def test_search_matches_brute_force(self):
        geometries = ((27, 18), (32, 32), (18, 27), (16, 24), (48, 20))
        modes = (("single", 1), ("conv1d", 1), ("dnn", 3), ("dnn", 21))
        for (bit_a, bit_b), (variant, m), p, q in itertools.product(geometries, modes, range(1, 9), range(1, 9)):
            for signed in (False, True) if min(p, q) > 1 else (False,):
                mode = ConvMode.parse(variant, m if variant == "dnn" else None)
                expected = _brute_force(bit_a, bit_b, p, q, variant, m, signed)
                if expected is None:
                    with self.assertRaises(InfeasibleGeometry):
                        search_optimal(bit_a, bit_b, p, q, mode, signed)
                    continue
                cfg = search_optimal(bit_a, bit_b, p, q, mode, signed)
                self.assertEqual(
                    (cfg.ops, cfg.n, cfg.k, cfg.s, cfg.g_b), expected, msg=f"{bit_a}x{bit_b} p={p} q={q} {mode} {signed}"
                )

    @settings(max_examples=150, deadline=None)
    @given(
        st.integers(4, 64),
        st.integers(4, 64),
        st.integers(2, 8),
        st.integers(2, 8),
        st.sampled_from(["single", "conv1d", "dnn"]),
        st.integers(1, 64),
        st.booleans(),
    )
    def test_search_matches_brute_force_anywhere(self, bit_a, bit_b, p, q, variant, m, signed):
        mode = ConvMode.parse(variant, m if variant == "dnn" else None)
        expected = _brute_force(bit_a, bit_b, p, q, variant, mode.m, signed)
        if expected is None:
            with self.assertRaises(InfeasibleGeometry):
                search_optimal(bit_a, bit_b, p, q, mode, signed)
        else:
            cfg = search_optimal(bit_a, bit_b, p, q, mode, signed)
            self.assertEqual((cfg.ops, cfg.n, cfg.k, cfg.s, cfg.g_b), expected)

    def test_wider_multiplier_never_loses_ops(self):
        for p, q in ((1, 1), (2, 3), (4, 4), (6, 2), (8, 8)):
            for mode in (ConvMode.single(), ConvMode.conv1d(), ConvMode.dnn(5)):
                previous = {}
                for bit_a in range(8, 49):
                    for bit_b in range(8, 49, 5):
                        ops = search_optimal(bit_a, bit_b, p, q, mode).ops
                        self.assertGreaterEqual(ops, previous.get(bit_b, 0), msg=f"{bit_a}x{bit_b} p={p} q={q}")
                        if bit_b - 5 >= 8:
                            self.assertGreaterEqual(ops, search_optimal(bit_a, bit_b - 5, p, q, mode).ops)
                        previous[bit_b] = ops

    def test_slice_size_is_monotone(self):
        for p, q, g_b in itertools.product(range(1, 9), range(1, 9), range(0, 8)):
            s = slice_size(p, q, g_b)
            if p < 8:
                self.assertGreaterEqual(slice_size(p + 1, q, g_b), s)
            if q < 8:
                self.assertGreaterEqual(slice_size(p, q + 1, g_b), s)
            self.assertEqual(slice_size(p, q, g_b + 1), s + 1)

    def test_symmetry(self):
        for n, k in itertools.product(range(1, 20), range(1, 20)):
            self.assertEqual(ops_per_mult(n, k), ops_per_mult(k, n))
        for bit_a, bit_b, p, q in ((27, 18, 2, 5), (32, 24, 4, 3), (18, 27, 1, 6)):
            for mode in (ConvMode.single(), ConvMode.dnn(4)):
                cfg = search_optimal(bit_a, bit_b, p, q, mode)
                swapped = search_optimal(bit_b, bit_a, q, p, mode)
                self.assertEqual(cfg.ops, swapped.ops)
                self.assertEqual((cfg.s, cfg.g_b), (swapped.s, swapped.g_b))

    def test_signed_operands_keep_a_sign_bit(self):
        self.assertEqual(packed_width(4, 3, 10), 24)
        self.assertEqual(packed_width(4, 3, 10, signed=True), 25)
        self.assertEqual(packed_width(4, 1, 10, signed=True), 4)
        # 6 + 2 * 13 fills a 32-bit port exactly, leaving no room for the sign
        self.assertEqual(_summary(search_optimal(32, 32, 6, 6)), (3, 2, 13, 1, 8))
        signed = search_optimal(32, 32, 6, 6, signed=True)
        self.assertTrue(check_feasible(signed))
        self.assertLessEqual(packed_width(6, signed.n, signed.s, True), 32)
        self.assertFalse(check_feasible(HiKonvConfig.build(32, 32, 6, 6, 3, 2, signed=True)))

    def test_golden_throughput_tables(self):
        for (bit_a, bit_b), name in (((27, 18), "throughput_27x18.csv"), ((32, 32), "throughput_32x32.csv")):
            text = format_throughput_csv(throughput_table(bit_a, bit_b))
            self.assertEqual(text, _golden(name), msg=name)
            self.assertEqual(len(text.splitlines()), 65)

    def test_throughput_table(self):
        rows = throughput_table(27, 18)
        self.assertEqual(len(rows), 64)
        self.assertEqual([(r.p, r.q) for r in rows[:3]], [(1, 1), (1, 2), (1, 3)])
        self.assertEqual(tuple(rows[0])[2:], DSP48E2_DIAGONAL[1])
        self.assertTrue(all(r.feasible for r in rows))

    def test_throughput_csv(self):
        text = format_throughput_csv(throughput_table(4, 4, range(4, 6), range(1, 2)))
        lines = text.splitlines()
        self.assertEqual(lines[0], "p,q,n,k,s,gb,ops")
        self.assertEqual(lines[2], "5,1,,,,,")
        self.assertEqual(len(lines), 3)

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(8, 64),
        st.integers(8, 64),
        st.integers(1, 8),
        st.integers(1, 8),
        st.sampled_from(["single", "conv1d", "dnn"]),
        st.integers(1, 64),
    )
    def test_search_result_is_feasible_and_consistent(self, bit_a, bit_b, p, q, mode, m):
        cfg = search_optimal(bit_a, bit_b, p, q, ConvMode.parse(mode, m if mode == "dnn" else None))
        self.assertTrue(cfg.is_consistent())
        self.assertTrue(check_feasible(cfg))
        # one more lane on either side never fits
        self.assertFalse(
            check_feasible(HiKonvConfig.build(bit_a, bit_b, p, q, cfg.n + 1, cfg.k, cfg.mode))
            and ops_per_mult(cfg.n + 1, cfg.k) > cfg.ops
        )


if __name__ == "__main__":
    unittest.main()
