"""
Description: slice packing of low-bitwidth sequences, product splitting, and bit-stream compression
Author: hikonv contributors
Date: 2022-04-19 04:12:55
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 04:12:55
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple, Union

import numpy as np
from pyutils.general import logger

from hikonv.exceptions import LaneOverflow, RangeError, TruncatedStream
from hikonv.op.config import MAX_QUANT_BITS, HiKonvConfig

__all__ = [
    "PRODUCT_BITS",
    "OperandSide",
    "QuantSeq",
    "PackedOperand",
    "ProductWord",
    "value_range",
    "pack_values",
    "split_values",
    "shift_segments",
    "pack_unsigned",
    "pack_signed",
    "multiply",
    "wide_multiply",
    "split_unsigned",
    "split_signed",
    "compress_bits",
    "decompress_bits",
]

PRODUCT_BITS = 128


def value_range(bitwidth: int, signed: bool) -> Tuple[int, int]:
    if signed:
        return -(1 << (bitwidth - 1)), (1 << (bitwidth - 1)) - 1
    return 0, (1 << bitwidth) - 1


class OperandSide(str, Enum):
    A = "A"  # features, n lanes of p bits
    B = "B"  # kernel, k lanes of q bits


@dataclass(frozen=True)
class QuantSeq:
    values: Tuple[int, ...]
    bitwidth: int
    signed: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if not 1 <= self.bitwidth <= MAX_QUANT_BITS:
            raise RangeError(f"Only support 1 - {MAX_QUANT_BITS} bit sequences, but got {self.bitwidth}")
        if self.signed and self.bitwidth == 1:
            raise RangeError("Binary sequences are unsigned {0, 1}")
        if self.values:
            lo, hi = self.lo, self.hi
            v_min, v_max = min(self.values), max(self.values)
            if v_min < lo or v_max > hi:
                logger.error(f"Values [{v_min}, {v_max}] exceed the {self.bitwidth}-bit range [{lo}, {hi}]")
                raise RangeError(f"values outside [{lo}, {hi}] for bitwidth {self.bitwidth}")

    @property
    def lo(self) -> int:
        return value_range(self.bitwidth, self.signed)[0]

    @property
    def hi(self) -> int:
        return value_range(self.bitwidth, self.signed)[1]

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return QuantSeq(self.values[index], self.bitwidth, self.signed)
        return self.values[index]

    @classmethod
    def random(cls, rng: np.random.Generator, length: int, bitwidth: int, signed: bool = False) -> "QuantSeq":
        lo, hi = value_range(bitwidth, signed)
        return cls(rng.integers(lo, hi + 1, size=length).tolist(), bitwidth, signed)


@dataclass(frozen=True)
class PackedOperand:
    """Unsigned bit pattern of a multiplicand, ``width`` bits wide."""

    word: int
    lane_count: int
    cfg_ref: HiKonvConfig
    side: OperandSide = OperandSide.A

    @property
    def width(self) -> int:
        return self.cfg_ref.bit_a if self.side is OperandSide.A else self.cfg_ref.bit_b

    @property
    def value(self) -> int:
        if self.cfg_ref.signed and (self.word >> (self.width - 1)) & 1:
            return self.word - (1 << self.width)
        return self.word


@dataclass(frozen=True)
class ProductWord:
    """Exact product. Python integers behave as infinitely sign-extended two's complement."""

    word: int
    cfg_ref: HiKonvConfig

    def __post_init__(self) -> None:
        assert -(1 << (PRODUCT_BITS - 1)) <= self.word < (1 << PRODUCT_BITS), logger.error(
            f"Product does not fit a {PRODUCT_BITS}-bit word"
        )

    @property
    def bits(self) -> int:
        return self.word & ((1 << PRODUCT_BITS) - 1)


def pack_values(values: Sequence[int], s: int) -> int:
    """sum(values[i] * 2**(s*i)) evaluated with shifts."""
    word = 0
    for v in reversed(values):
        word = (word << s) + v
    return word


def split_values(word: int, s: int, count: int, signed: bool, top: bool = False) -> List[int]:
    """Read ``count`` s-bit segments from ``word``.

    Signed segments are read as s-bit two's complement plus the sign bit of the segment below
    (the split incrementer). With ``top`` set the last segment also takes every bit above it,
    i.e. it sign-extends from the word itself.
    """
    mask = (1 << s) - 1
    if not signed:
        return [(word >> (s * m)) & mask for m in range(count)]
    half = 1 << (s - 1)
    full = 1 << s
    out = []
    borrow = 0
    for m in range(count):
        field = (word >> (s * m)) & mask
        if field & half:
            field -= full
        out.append(field + borrow)
        borrow = (word >> (s * (m + 1) - 1)) & 1
    if top and count:
        m = count - 1
        out[-1] = (word >> (s * m)) + ((word >> (s * m - 1)) & 1 if m else 0)
    return out


def shift_segments(word: int, s: int, count: int, signed: bool) -> int:
    """Drop the lowest ``count`` segments, keeping the exact value of the rest."""
    shifted = word >> (s * count)
    if signed and count:
        shifted += (word >> (s * count - 1)) & 1
    return shifted


def _operand_geometry(cfg: HiKonvConfig, side: OperandSide) -> Tuple[int, int, int]:
    if side is OperandSide.A:
        return cfg.n, cfg.bit_a, cfg.p
    return cfg.k, cfg.bit_b, cfg.q


def _check_operand(seq: QuantSeq, cfg: HiKonvConfig, side: OperandSide, signed: bool) -> Tuple[int, int]:
    lanes, width, bits = _operand_geometry(cfg, side)
    if seq.signed != signed or cfg.signed != signed:
        kind = "signed" if signed else "unsigned"
        raise RangeError(f"{kind} packing needs {kind} data and config, got seq.signed={seq.signed}, cfg.signed={cfg.signed}")
    if len(seq) > lanes:
        logger.error(f"Operand {side.value} has {lanes} lanes, but got {len(seq)} elements")
        raise LaneOverflow(f"{len(seq)} elements exceed the {lanes}-lane budget of operand {side.value}")
    if seq.bitwidth > bits:
        raise RangeError(f"{seq.bitwidth}-bit sequence does not fit {bits}-bit slices of operand {side.value}")
    return lanes, width


def _check_width(value: int, width: int, signed: bool, side: OperandSide) -> None:
    lo, hi = value_range(width, signed)
    if not lo <= value <= hi:
        raise LaneOverflow(f"packed operand {side.value} exceeds its {width}-bit port")


def pack_unsigned(seq: QuantSeq, cfg: HiKonvConfig, side: Union[OperandSide, str] = OperandSide.A) -> PackedOperand:
    side = OperandSide(side)
    _, width = _check_operand(seq, cfg, side, signed=False)
    # lanes above len(seq) stay zero
    word = pack_values(seq.values, cfg.s)
    _check_width(word, width, False, side)
    return PackedOperand(word, len(seq), cfg, side)


def _pack_signed_decrement(values: Sequence[int], s: int, width: int) -> int:
    # each slice absorbs the sign extension of everything below it
    mask = (1 << s) - 1
    word = 0
    borrow = 0
    for i, v in enumerate(values):
        field = (v - borrow) & mask
        word |= field << (s * i)
        borrow = field >> (s - 1)
    top = s * len(values)
    if borrow and top < width:
        word |= ((1 << (width - top)) - 1) << top
    return word & ((1 << width) - 1)


def pack_signed(
    seq: QuantSeq, cfg: HiKonvConfig, side: Union[OperandSide, str] = OperandSide.A, method: str = "sum"
) -> PackedOperand:
    """Two's-complement packing of a signed sequence.

    Args:
        seq (QuantSeq): signed elements, at most as many as the operand has lanes
        cfg (HiKonvConfig): packing configuration
        side (OperandSide, optional): which multiplicand to build. Defaults to A.
        method (str, optional): "sum" adds the shifted elements in wide arithmetic, "decrement"
            assigns each slice its element minus the sign bit of the slice below. Both give the
            same bits. Defaults to "sum".

    Returns:
        PackedOperand: word truncated to the operand width
    """
    assert method in {"sum", "decrement"}, logger.error(f"Packing method can only be [sum, decrement], but got {method}")
    side = OperandSide(side)
    _, width = _check_operand(seq, cfg, side, signed=True)
    value = pack_values(seq.values, cfg.s)
    _check_width(value, width, True, side)
    if method == "sum":
        word = value & ((1 << width) - 1)
    else:
        word = _pack_signed_decrement(seq.values, cfg.s, width)
    return PackedOperand(word, len(seq), cfg, side)


def wide_multiply(a_word: int, b_word: int, cfg: HiKonvConfig, probe=None) -> ProductWord:
    """One wide multiplication of packed operand values; counted on ``probe`` when given.

    Both operands are checked against their port widths and the product against PRODUCT_BITS.
    """
    _check_width(a_word, cfg.bit_a, cfg.signed, OperandSide.A)
    _check_width(b_word, cfg.bit_b, cfg.signed, OperandSide.B)
    if probe is not None:
        probe.record_mults(1)
    return ProductWord(a_word * b_word, cfg)


def multiply(a: PackedOperand, b: PackedOperand, probe=None) -> ProductWord:
    return wide_multiply(a.value, b.value, a.cfg_ref, probe)


def _check_segments(cfg: HiKonvConfig, segment_count: int) -> None:
    if not 0 <= segment_count <= cfg.segments:
        raise LaneOverflow(f"a product holds at most {cfg.segments} segments, but {segment_count} were requested")


def split_unsigned(prod: ProductWord, cfg: HiKonvConfig, segment_count: int) -> List[int]:
    _check_segments(cfg, segment_count)
    return split_values(prod.word, cfg.s, segment_count, signed=False)


def split_signed(prod: ProductWord, cfg: HiKonvConfig, segment_count: int) -> List[int]:
    _check_segments(cfg, segment_count)
    return split_values(prod.word, cfg.s, segment_count, signed=True, top=segment_count == cfg.segments)


def compress_bits(seq: QuantSeq) -> bytes:
    """Concatenate the p-bit patterns LSB-first; the last byte is zero padded."""
    if not len(seq):
        return b""
    p = seq.bitwidth
    values = np.asarray(seq.values, dtype=np.int64) & ((1 << p) - 1)
    bits = (values[:, None] >> np.arange(p, dtype=np.int64)) & 1
    return np.packbits(bits.astype(np.uint8).ravel(), bitorder="little").tobytes()


def decompress_bits(stream: Union[bytes, bytearray, memoryview], p: int, count: int, signed: bool = False) -> QuantSeq:
    nbytes = (count * p + 7) // 8
    if len(stream) < nbytes:
        logger.error(f"Need {nbytes} bytes for {count} {p}-bit elements, but got {len(stream)}")
        raise TruncatedStream(f"stream holds {len(stream)} bytes, {nbytes} needed")
    if count == 0:
        return QuantSeq((), p, signed)
    raw = np.frombuffer(bytes(stream[:nbytes]), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")[: count * p].reshape(count, p).astype(np.int64)
    values = bits @ np.left_shift(1, np.arange(p, dtype=np.int64))
    if signed:
        values = np.where(values >= 1 << (p - 1), values - (1 << p), values)
    return QuantSeq(values.tolist(), p, signed)
