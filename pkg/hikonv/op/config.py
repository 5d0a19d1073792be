"""
Description: slice width, guard bits, feasibility and throughput-optimal packing search
Author: hikonv contributors
Date: 2022-04-19 03:40:27
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 03:40:27
"""
import csv
import io
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional

from pyutils.general import logger

from hikonv.exceptions import InfeasibleGeometry, RangeError

__all__ = [
    "MAX_OPERAND_BITS",
    "MAX_QUANT_BITS",
    "ConvVariant",
    "ConvMode",
    "HiKonvConfig",
    "ThroughputRow",
    "ceil_log2",
    "slice_size",
    "guard_bits",
    "check_feasible",
    "packed_width",
    "ops_per_mult",
    "search_optimal",
    "throughput_table",
    "format_throughput_csv",
    "max_group_size",
]

MAX_OPERAND_BITS = 64  # product must fit a 128-bit word
MAX_QUANT_BITS = 8


def ceil_log2(x: int) -> int:
    """ceil(log2 x) for positive integers, with ceil_log2(1) = 0."""
    assert x >= 1, logger.error(f"ceil_log2 expects a positive integer, but got {x}")
    return (x - 1).bit_length()


class ConvVariant(str, Enum):
    SINGLE = "single"
    CONV1D = "conv1d"
    DNN = "dnn"


@dataclass(frozen=True)
class ConvMode:
    """Which accumulation the guard bits have to absorb.

    SINGLE covers one product, CONV1D the overlap-add of consecutive block products
    and DNN additionally sums the products of ``m`` input channels before splitting.
    """

    variant: ConvVariant = ConvVariant.SINGLE
    m: Optional[int] = None

    def __post_init__(self) -> None:
        if self.variant is ConvVariant.DNN:
            if self.m is None or self.m < 1:
                raise RangeError(f"dnn mode needs a channel group size m >= 1, but got {self.m}")
        elif self.m is not None:
            raise RangeError(f"channel group size only applies to dnn mode, but got m={self.m} for {self.variant.value}")

    @classmethod
    def single(cls) -> "ConvMode":
        return cls(ConvVariant.SINGLE)

    @classmethod
    def conv1d(cls) -> "ConvMode":
        return cls(ConvVariant.CONV1D)

    @classmethod
    def dnn(cls, m: int = 1) -> "ConvMode":
        return cls(ConvVariant.DNN, m)

    @classmethod
    def parse(cls, name: str, m: Optional[int] = None) -> "ConvMode":
        try:
            variant = ConvVariant(name.lower())
        except ValueError:
            raise RangeError(f"Unknown mode {name}, expected one of (single, conv1d, dnn)") from None
        if variant is ConvVariant.DNN:
            return cls(variant, 1 if m is None else m)
        if m is not None:
            logger.warning(f"Channel group size m={m} is ignored in {variant.value} mode")
        return cls(variant)

    def __str__(self) -> str:
        if self.variant is ConvVariant.DNN:
            return f"dnn(m={self.m})"
        return self.variant.value


def slice_size(p: int, q: int, g_b: int) -> int:
    # binary operands contribute no extra product bits
    if p == 1:
        return q + g_b
    if q == 1:
        return p + g_b
    return p + q + g_b


def guard_bits(mode: ConvMode, n: int, k: int) -> int:
    assert n >= 1 and k >= 1, logger.error(f"Lane counts must be positive, but got n={n}, k={k}")
    if mode.variant is ConvVariant.SINGLE:
        return ceil_log2(min(k, n))
    if mode.variant is ConvVariant.CONV1D:
        return ceil_log2(k)
    return ceil_log2(mode.m * min(k, n))


def ops_per_mult(n: int, k: int) -> int:
    """Multiplications plus additions that one packed product replaces."""
    return n * k + (n - 1) * (k - 1)


def _check_quant_bits(p: int, q: int, signed: bool) -> None:
    for name, bits in (("p", p), ("q", q)):
        if not 1 <= bits <= MAX_QUANT_BITS:
            logger.error(f"Only support 1 - {MAX_QUANT_BITS} bit operands, but got {name}={bits}")
            raise RangeError(f"{name}={bits} outside [1, {MAX_QUANT_BITS}]")
    if signed and min(p, q) == 1:
        raise RangeError("Binary operands are unsigned {0, 1}; signed packing needs p, q >= 2")


def _check_geometry(bit_a: int, bit_b: int, p: int, q: int) -> None:
    if not (1 <= bit_a <= MAX_OPERAND_BITS and 1 <= bit_b <= MAX_OPERAND_BITS):
        logger.error(f"Multiplier {bit_a}x{bit_b} is outside 1..{MAX_OPERAND_BITS} bits per operand")
        raise InfeasibleGeometry(f"multiplier {bit_a}x{bit_b} exceeds {MAX_OPERAND_BITS}-bit operands")
    if p > bit_a or q > bit_b:
        logger.error(f"A {p}x{q}-bit operand pair does not fit a {bit_a}x{bit_b} multiplier")
        raise InfeasibleGeometry(f"p={p}, q={q} do not fit bit_a={bit_a}, bit_b={bit_b}")


def packed_width(bits: int, lanes: int, s: int, signed: bool = False) -> int:
    """Port bits a packed operand needs. A signed sum of several lanes can fall below the range of
    its top slice, e.g. [-8, -8] in 10-bit slices is -8200 < -2**13."""
    width = bits + (lanes - 1) * s
    return width + 1 if signed and lanes > 1 else width


def _fits(bit_a: int, bit_b: int, p: int, q: int, n: int, k: int, s: int, signed: bool = False) -> bool:
    return packed_width(p, n, s, signed) <= bit_a and packed_width(q, k, s, signed) <= bit_b


@dataclass(frozen=True)
class HiKonvConfig:
    bit_a: int
    bit_b: int
    p: int
    q: int
    n: int
    k: int
    s: int
    g_b: int
    mode: ConvMode = ConvMode()
    signed: bool = False

    def __post_init__(self) -> None:
        _check_quant_bits(self.p, self.q, self.signed)
        if not (1 <= self.bit_a <= MAX_OPERAND_BITS and 1 <= self.bit_b <= MAX_OPERAND_BITS):
            raise InfeasibleGeometry(f"multiplier {self.bit_a}x{self.bit_b} exceeds {MAX_OPERAND_BITS}-bit operands")
        if self.n < 1 or self.k < 1:
            raise RangeError(f"Lane counts must be positive, but got n={self.n}, k={self.k}")
        if self.g_b < 0 or self.s < 1:
            raise RangeError(f"Invalid slice s={self.s} with guard bits g_b={self.g_b}")

    @classmethod
    def build(
        cls,
        bit_a: int,
        bit_b: int,
        p: int,
        q: int,
        n: int,
        k: int,
        mode: ConvMode = ConvMode(),
        signed: bool = False,
    ) -> "HiKonvConfig":
        """Self-consistent config for the given lane counts. Feasibility is not implied."""
        g_b = guard_bits(mode, n, k)
        return cls(bit_a, bit_b, p, q, n, k, slice_size(p, q, g_b), g_b, mode, signed)

    @property
    def ops(self) -> int:
        return ops_per_mult(self.n, self.k)

    @property
    def segments(self) -> int:
        return self.n + self.k - 1

    def is_consistent(self) -> bool:
        return self.g_b == guard_bits(self.mode, self.n, self.k) and self.s == slice_size(self.p, self.q, self.g_b)

    def as_dict(self) -> Dict[str, int]:
        return {"n": self.n, "k": self.k, "s": self.s, "gb": self.g_b, "ops": self.ops}

    def __str__(self) -> str:
        return " ".join(f"{key}={value}" for key, value in self.as_dict().items())


def check_feasible(cfg: HiKonvConfig) -> bool:
    if not cfg.is_consistent():
        return False
    return _fits(cfg.bit_a, cfg.bit_b, cfg.p, cfg.q, cfg.n, cfg.k, cfg.s, cfg.signed)


@lru_cache(maxsize=4096)
def search_optimal(
    bit_a: int, bit_b: int, p: int, q: int, mode: ConvMode = ConvMode(), signed: bool = False
) -> HiKonvConfig:
    """Exhaustive search for the packing with the most operations per wide multiplication.

    Guard bits are recomputed for every candidate (n, k), so the feasibility check and the
    overflow rule always agree. Ties prefer more feature elements per product (larger n),
    then larger k.

    Args:
        bit_a (int): width of multiplicand A in bits
        bit_b (int): width of multiplicand B in bits
        p (int): feature bitwidth
        q (int): kernel bitwidth
        mode (ConvMode, optional): accumulation the guard bits must absorb. Defaults to single.
        signed (bool, optional): two's-complement operands, which need a sign bit above a multi-lane
            operand. Defaults to False.

    Returns:
        HiKonvConfig: feasible and self-consistent optimum
    """
    _check_quant_bits(p, q, signed)
    _check_geometry(bit_a, bit_b, p, q)
    best = None
    # s >= 1, so no feasible lane count exceeds these bounds
    for n in range(1, bit_a - p + 2):
        for k in range(1, bit_b - q + 2):
            g_b = guard_bits(mode, n, k)
            s = slice_size(p, q, g_b)
            if not _fits(bit_a, bit_b, p, q, n, k, s, signed):
                continue
            key = (ops_per_mult(n, k), n, k)
            if best is None or key > best[0]:
                best = (key, g_b, s)
    if best is None:
        raise InfeasibleGeometry(f"no packing of p={p}, q={q} fits {bit_a}x{bit_b}")
    (_, n, k), g_b, s = best
    return HiKonvConfig(bit_a, bit_b, p, q, n, k, s, g_b, mode, signed)


class ThroughputRow(NamedTuple):
    p: int
    q: int
    n: Optional[int] = None
    k: Optional[int] = None
    s: Optional[int] = None
    g_b: Optional[int] = None
    ops: Optional[int] = None

    @property
    def feasible(self) -> bool:
        return self.ops is not None


def throughput_table(
    bit_a: int,
    bit_b: int,
    p_range: Iterable[int] = range(1, MAX_QUANT_BITS + 1),
    q_range: Iterable[int] = range(1, MAX_QUANT_BITS + 1),
    mode: ConvMode = ConvMode(),
) -> List[ThroughputRow]:
    """Optimal packing for every (p, q) pair in row-major order; infeasible pairs give empty rows."""
    q_range = list(q_range)
    rows = []
    for p in p_range:
        for q in q_range:
            try:
                cfg = search_optimal(bit_a, bit_b, p, q, mode)
            except InfeasibleGeometry:
                rows.append(ThroughputRow(p, q))
                continue
            rows.append(ThroughputRow(p, q, cfg.n, cfg.k, cfg.s, cfg.g_b, cfg.ops))
    return rows


def format_throughput_csv(rows: Iterable[ThroughputRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["p", "q", "n", "k", "s", "gb", "ops"])
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buffer.getvalue()


def max_group_size(bit_a: int, bit_b: int, p: int, q: int, limit: int = 1024, signed: bool = False) -> int:
    """Largest channel group size that keeps the single-product throughput.

    The optimum is non-increasing in the group size, so a bisection over [1, limit] is exact.
    """
    assert limit >= 1, logger.error(f"Group size limit must be positive, but got {limit}")
    base = search_optimal(bit_a, bit_b, p, q, ConvMode.dnn(1), signed).ops
    lo, hi = 1, limit
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if search_optimal(bit_a, bit_b, p, q, ConvMode.dnn(mid), signed).ops == base:
            lo = mid
        else:
            hi = mid - 1
    return lo
