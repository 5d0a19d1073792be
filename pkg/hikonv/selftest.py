"""
Description: exhaustive and randomized equivalence suites of the packed kernels against the naive oracle
Author: hikonv contributors
Date: 2022-04-20 07:20:33
LastEditors: hikonv contributors
LastEditTime: 2022-04-20 07:20:33
"""
import itertools
from dataclasses import dataclass, field
from multiprocessing.dummy import Pool
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
from pyutils.general import logger
from tqdm import tqdm

from hikonv.devices.multiplier import GPP32Multiplier, GPP64Multiplier
from hikonv.exceptions import EquivalenceFailure, RangeError
from hikonv.layers.hikonv_conv import HiKonvConv2d
from hikonv.op.bitpack_op import OperandSide, QuantSeq, pack_signed, value_range
from hikonv.op.config import MAX_QUANT_BITS, ConvMode, HiKonvConfig, search_optimal
from hikonv.op.kernel_op import Tensor3, Tensor4, conv1d, conv2d_layer, conv_block
from hikonv.op.oracle_op import naive_conv1d, naive_conv2d

__all__ = [
    "MAX_EXHAUSTIVE_BITS",
    "SelftestCase",
    "SelftestReport",
    "block_cases",
    "packing_cases",
    "random_conv1d_cases",
    "random_conv2d_cases",
    "run_selftest",
]

MAX_BLOCK_LANES = 3
MAX_PACKING_BITS = 3
MAX_EXHAUSTIVE_BITS = 3
MAX_CONV1D_LENGTH = 256
MAX_CONV2D_CHANNELS = 16
MAX_CONV2D_SIZE = 16
MAX_CONV2D_KERNEL = 5


@dataclass(frozen=True)
class SelftestCase:
    """``run`` returns the expected value and the actual value of every strategy under test."""

    suite: str
    inputs: Dict[str, Any]
    run: Callable[[], Tuple[Any, Dict[str, Any]]] = field(repr=False)


@dataclass
class SelftestReport:
    counts: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def summary(self) -> str:
        lines = [f"{suite}={count}" for suite, count in self.counts.items()]
        lines.append(f"total={self.total}")
        return "\n".join(lines)


def _check(case: SelftestCase) -> None:
    expected, actuals = case.run()
    for strategy, actual in actuals.items():
        if actual != expected:
            raise EquivalenceFailure(f"{case.suite} ({strategy}) differs from the oracle", case.inputs, expected, actual)


def _all_seqs(bitwidth: int, signed: bool, max_len: int) -> List[QuantSeq]:
    lo, hi = value_range(bitwidth, signed)
    domain = range(lo, hi + 1)
    return [
        QuantSeq(values, bitwidth, signed)
        for length in range(1, max_len + 1)
        for values in itertools.product(domain, repeat=length)
    ]


def _signednesses(bitwidth: int) -> Tuple[bool, ...]:
    return (False,) if bitwidth == 1 else (False, True)


def block_cases(exhaustive_bits: int) -> List[SelftestCase]:
    """Every (f, g) pair with up to three elements each, for every bitwidth up to ``exhaustive_bits``."""
    cases = []
    for bits in range(1, exhaustive_bits + 1):
        for signed in _signednesses(bits):
            cfg = HiKonvConfig.build(
                GPP64Multiplier.bit_a, GPP64Multiplier.bit_b, bits, bits, MAX_BLOCK_LANES, MAX_BLOCK_LANES, signed=signed
            )
            seqs = _all_seqs(bits, signed, MAX_BLOCK_LANES)
            for f, g in itertools.product(seqs, seqs):
                cases.append(
                    SelftestCase(
                        "block",
                        {"f": f.values, "g": g.values, "cfg": str(cfg), "signed": signed},
                        lambda f=f, g=g, cfg=cfg: (naive_conv1d(f, g), {"packed": conv_block(f, g, cfg)}),
                    )
                )
    return cases


def packing_cases() -> List[SelftestCase]:
    """Per-slice borrow packing against the wide-arithmetic sum, both operand sides."""
    cases = []
    for bits in range(2, MAX_PACKING_BITS + 1):
        cfg = HiKonvConfig.build(
            GPP32Multiplier.bit_a, GPP32Multiplier.bit_b, bits, bits, MAX_BLOCK_LANES, MAX_BLOCK_LANES, signed=True
        )
        for seq in _all_seqs(bits, True, MAX_BLOCK_LANES):
            for side in OperandSide:
                cases.append(
                    SelftestCase(
                        "packing",
                        {"seq": seq.values, "side": side.value, "cfg": str(cfg)},
                        lambda seq=seq, side=side, cfg=cfg: (
                            pack_signed(seq, cfg, side, "sum").word,
                            {"decrement": pack_signed(seq, cfg, side, "decrement").word},
                        ),
                    )
                )
    return cases


def _random_bits(rng: np.random.Generator) -> Tuple[int, int, bool]:
    p, q = (int(b) for b in rng.integers(1, MAX_QUANT_BITS + 1, size=2))
    signed = bool(rng.integers(2)) and min(p, q) >= 2
    return p, q, signed


def random_conv1d_cases(rng: np.random.Generator, count: int, bit_a: int, bit_b: int) -> List[SelftestCase]:
    """Random lengths up to 256, kernels up to twice the lane budget so tiling is exercised."""
    cases = []
    for _ in range(count):
        p, q, signed = _random_bits(rng)
        cfg = search_optimal(bit_a, bit_b, p, q, ConvMode.conv1d(), signed)
        length = int(rng.integers(1, MAX_CONV1D_LENGTH + 1))
        kernel_length = int(rng.integers(1, 2 * cfg.k + 1))
        f = QuantSeq.random(rng, length, p, signed)
        g = QuantSeq.random(rng, kernel_length, q, signed)
        cases.append(
            SelftestCase(
                "conv1d",
                {"f": f.values, "g": g.values, "cfg": str(cfg), "signed": signed},
                lambda f=f, g=g, cfg=cfg: (
                    naive_conv1d(f, g),
                    {"packed": conv1d(f, g, cfg), "unpacked": conv1d(f, g, cfg, accumulate="unpacked")},
                ),
            )
        )
    return cases


def random_conv2d_cases(rng: np.random.Generator, count: int, bit_a: int, bit_b: int) -> List[SelftestCase]:
    cases = []
    for _ in range(count):
        p, q, signed = _random_bits(rng)
        kernel_size = int(rng.integers(1, MAX_CONV2D_KERNEL + 1))
        height, width = (int(d) for d in rng.integers(kernel_size, MAX_CONV2D_SIZE + 1, size=2))
        c_in, c_out = (int(c) for c in rng.integers(1, MAX_CONV2D_CHANNELS + 1, size=2))
        x = Tensor3.random(rng, (c_in, height, width), p, signed)
        w = Tensor4.random(rng, (c_out, c_in, kernel_size, kernel_size), q, signed)

        def run(x=x, w=w, p=p):
            layer = HiKonvConv2d.from_weights(w, bit_a, bit_b, in_bit=p)
            return naive_conv2d(x, w), {
                "packed": layer(x),
                "unpacked": conv2d_layer(x, w, layer.cfg, accumulate="unpacked"),
            }

        cases.append(
            SelftestCase(
                "conv2d",
                {"shape": (c_in, c_out, height, width, kernel_size), "p": p, "q": q, "signed": signed},
                run,
            )
        )
    return cases


def run_selftest(
    exhaustive_bits: int = 2,
    random_cases: int = 10000,
    conv2d_cases: int = 100,
    seed: int = 0,
    threads: int = 1,
    bit_a: int = GPP32Multiplier.bit_a,
    bit_b: int = GPP32Multiplier.bit_b,
    progress: bool = True,
) -> SelftestReport:
    """Run every suite and stop at the first counterexample.

    All random cases are drawn from ``seed`` before anything runs, so the checked cases do not
    depend on ``threads``.

    Args:
        exhaustive_bits (int, optional): largest bitwidth of the exhaustive block sweep. Defaults to 2.
        random_cases (int, optional): randomized 1-D convolutions. Defaults to 10000.
        conv2d_cases (int, optional): randomized 2-D layers. Defaults to 100.
        seed (int, optional): random seed. Defaults to 0.
        threads (int, optional): worker threads for independent cases. Defaults to 1.
        bit_a (int, optional): multiplier width A of the randomized suites. Defaults to 32.
        bit_b (int, optional): multiplier width B of the randomized suites. Defaults to 32.
        progress (bool, optional): show progress bars. Defaults to True.

    Raises:
        RangeError: exhaustive_bits above MAX_EXHAUSTIVE_BITS
        EquivalenceFailure: the first case whose packed result differs from the oracle

    Returns:
        SelftestReport: number of checked cases per suite
    """
    assert exhaustive_bits >= 0 and random_cases >= 0 and conv2d_cases >= 0, logger.error(
        "Suite sizes must be non-negative"
    )
    if exhaustive_bits > MAX_EXHAUSTIVE_BITS:
        logger.error(f"Exhaustive sweep supports up to {MAX_EXHAUSTIVE_BITS} bits, but got {exhaustive_bits}")
        raise RangeError(
            f"exhaustive_bits={exhaustive_bits} exceeds {MAX_EXHAUSTIVE_BITS}; the block sweep grows as the square of "
            f"all sequences up to {MAX_BLOCK_LANES} elements"
        )
    rng = np.random.default_rng(seed)
    suites = {
        "block": block_cases(exhaustive_bits),
        "packing": packing_cases(),
        "conv1d": random_conv1d_cases(rng, random_cases, bit_a, bit_b),
        "conv2d": random_conv2d_cases(rng, conv2d_cases, bit_a, bit_b),
    }
    report = SelftestReport()
    pool = Pool(threads) if threads > 1 else None
    try:
        for suite, cases in suites.items():
            results = pool.imap(_check, cases, chunksize=64) if pool is not None else map(_check, cases)
            for _ in tqdm(results, total=len(cases), desc=suite, disable=not progress):
                pass
            report.counts[suite] = len(cases)
            logger.info(f"Selftest {suite}: {len(cases)} cases passed")
    finally:
        if pool is not None:
            pool.terminate()
    return report
