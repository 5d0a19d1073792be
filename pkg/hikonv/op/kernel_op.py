"""
Description: packed convolution kernels: single block, 1-D overlap-add and 2-D layer with packed channel accumulation
Author: hikonv contributors
Date: 2022-04-19 05:31:08
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 05:31:08
"""
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pyutils.general import logger

from hikonv.exceptions import InfeasibleGeometry, RangeError, ShapeMismatch
from hikonv.op.bitpack_op import (
    OperandSide,
    QuantSeq,
    multiply,
    pack_signed,
    pack_unsigned,
    pack_values,
    shift_segments,
    split_values,
    value_range,
    wide_multiply,
)
from hikonv.op.config import MAX_QUANT_BITS, HiKonvConfig, packed_width

__all__ = [
    "FULL_PRECISION_BITS",
    "KernelProbe",
    "Tensor3",
    "Tensor4",
    "PackedKernel",
    "conv_block",
    "conv1d",
    "pack_kernel_rows",
    "conv2d_layer",
]

FULL_PRECISION_BITS = 32
ACCUMULATE_MODES = {"packed", "unpacked"}


@dataclass
class KernelProbe:
    """Instrumentation for one kernel invocation."""

    wide_mults: int = 0
    max_segment: int = 0

    def record_mults(self, count: int = 1) -> None:
        self.wide_mults += count

    def record_segments(self, segments: Iterable[int]) -> None:
        for v in segments:
            if abs(v) > self.max_segment:
                self.max_segment = abs(v)

    def reset(self) -> None:
        self.wide_mults = 0
        self.max_segment = 0


def _check_bitwidth(bitwidth: int) -> None:
    if not (1 <= bitwidth <= MAX_QUANT_BITS or bitwidth == FULL_PRECISION_BITS):
        raise RangeError(f"Only support 1 - {MAX_QUANT_BITS} or {FULL_PRECISION_BITS} bit tensors, but got {bitwidth}")


@dataclass(eq=False)
class _IntTensor:
    data: np.ndarray
    bitwidth: int = FULL_PRECISION_BITS
    signed: bool = True
    ndim = 0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.data.ndim != self.ndim:
            logger.error(f"{type(self).__name__} expects {self.ndim} dimensions, but got shape {self.data.shape}")
            raise ShapeMismatch(f"{type(self).__name__} needs {self.ndim} dims, got {self.data.ndim}")
        _check_bitwidth(self.bitwidth)
        if self.signed and self.bitwidth == 1:
            raise RangeError("Binary tensors are unsigned {0, 1}")
        if self.data.size:
            lo, hi = value_range(self.bitwidth, self.signed)
            if self.data.min() < lo or self.data.max() > hi:
                raise RangeError(f"values outside [{lo}, {hi}] for bitwidth {self.bitwidth}")

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @classmethod
    def random(cls, rng: np.random.Generator, dims: Sequence[int], bitwidth: int, signed: bool = False):
        lo, hi = value_range(bitwidth, signed)
        return cls(rng.integers(lo, hi + 1, size=tuple(dims)), bitwidth, signed)

    def __eq__(self, other) -> bool:
        if not isinstance(other, type(self)):
            return NotImplemented
        return (
            self.bitwidth == other.bitwidth
            and self.signed == other.signed
            and np.array_equal(self.data, other.data)
        )


class Tensor3(_IntTensor):
    """Feature map I[C][H][W]."""

    ndim = 3


class Tensor4(_IntTensor):
    """Weights W[C_o][C_i][K][K]."""

    ndim = 4

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.data.shape[2] != self.data.shape[3]:
            raise ShapeMismatch(f"square kernels only, got {self.data.shape[2]}x{self.data.shape[3]}")


@dataclass(frozen=True)
class PackedKernel:
    """B words of the row-reversed weights, indexed [c_o][c_i][k_h][chunk]."""

    words: Tuple[Tuple[Tuple[Tuple[int, ...], ...], ...], ...]
    c_out: int
    c_in: int
    kernel_size: int
    chunk_sizes: Tuple[int, ...]
    bitwidth: int
    signed: bool
    cfg_ref: HiKonvConfig = field(repr=False, default=None)


def _check_fits(cfg: HiKonvConfig) -> None:
    a_width = packed_width(cfg.p, cfg.n, cfg.s, cfg.signed)
    b_width = packed_width(cfg.q, cfg.k, cfg.s, cfg.signed)
    if a_width > cfg.bit_a or b_width > cfg.bit_b:
        logger.error(f"Config ({cfg}) does not fit a {cfg.bit_a}x{cfg.bit_b} multiplier")
        raise InfeasibleGeometry(f"packing {cfg} exceeds the {cfg.bit_a}x{cfg.bit_b} multiplier")


def _check_headroom(cfg: HiKonvConfig, terms: int) -> None:
    # a segment sums `terms` products of p x q bits
    if terms > 1 << cfg.g_b:
        logger.error(f"{cfg.g_b} guard bits cannot absorb a sum of {terms} products")
        raise InfeasibleGeometry(f"g_b={cfg.g_b} too small for {terms} accumulated products")


def _segment_terms(cfg: HiKonvConfig, chunk: int, accumulate: str) -> int:
    # products added by one segment: the whole kernel chunk once blocks overlap in the packed
    # domain, at most one block worth otherwise
    return chunk if accumulate == "packed" else min(cfg.n, chunk)


def _check_operand_data(bitwidth: int, signed: bool, cfg: HiKonvConfig, side: OperandSide) -> None:
    bits = cfg.p if side is OperandSide.A else cfg.q
    if bitwidth > bits:
        raise RangeError(f"{bitwidth}-bit operand {side.value} does not fit {bits}-bit slices")
    if signed != cfg.signed:
        raise RangeError(f"operand {side.value} signed={signed} but config signed={cfg.signed}")


def conv_block(f_block: QuantSeq, g: QuantSeq, cfg: HiKonvConfig, probe: Optional[KernelProbe] = None) -> List[int]:
    """Full convolution of one feature block with a kernel using one wide multiplication.

    Args:
        f_block (QuantSeq): at most cfg.n feature elements
        g (QuantSeq): at most cfg.k kernel elements
        cfg (HiKonvConfig): packing configuration
        probe (KernelProbe, optional): instrumentation. Defaults to None.

    Returns:
        List[int]: len(f_block) + len(g) - 1 outputs
    """
    if not len(f_block) or not len(g):
        raise ShapeMismatch("convolution of an empty sequence")
    _check_fits(cfg)
    _check_headroom(cfg, min(len(f_block), len(g)))
    pack = pack_signed if cfg.signed else pack_unsigned
    prod = multiply(pack(f_block, cfg, OperandSide.A), pack(g, cfg, OperandSide.B), probe)
    out = split_values(prod.word, cfg.s, len(f_block) + len(g) - 1, cfg.signed, top=True)
    if probe is not None:
        probe.record_segments(out)
    return out


def _row_segments(
    block_words: Iterable[int], s: int, n: int, tail: int, signed: bool, accumulate: str, probe: Optional[KernelProbe]
) -> List[int]:
    """Turn per-block product words into the segments of the whole row.

    ``tail`` is the number of segments a block product has beyond its own ``n``.
    """
    if accumulate == "packed":
        out = []
        carry = 0
        for word in block_words:
            acc = word + carry
            out.extend(split_values(acc, s, n, signed))
            carry = shift_segments(acc, s, n, signed)
        out.extend(split_values(carry, s, tail, signed, top=True))
    else:
        block_words = list(block_words)
        out = [0] * (len(block_words) * n + tail)
        for x, word in enumerate(block_words):
            segments = split_values(word, s, n + tail, signed, top=True)
            if probe is not None:
                probe.record_segments(segments)
            base = x * n
            for m, v in enumerate(segments):
                out[base + m] += v
    if probe is not None:
        probe.record_segments(out)
    return out


def _block_words(values: Sequence[int], s: int, n: int) -> List[int]:
    return [pack_values(values[start : start + n], s) for start in range(0, len(values), n)]


def _kernel_chunks(values: Sequence[int], k: int) -> List[Sequence[int]]:
    return [values[start : start + k] for start in range(0, len(values), k)]


def conv1d(
    f: QuantSeq,
    g: QuantSeq,
    cfg: HiKonvConfig,
    probe: Optional[KernelProbe] = None,
    accumulate: str = "packed",
    tile_kernel: bool = True,
) -> List[int]:
    """Full 1-D convolution of arbitrary length.

    f is cut into blocks of cfg.n (the last one implicitly zero padded) and every block costs
    one wide multiplication. With packed accumulation the segments of a block product that
    extend past the block are carried into the next product before splitting; the unpacked
    strategy splits every product and adds in full precision. Kernels longer than cfg.k are
    tiled into chunks of cfg.k whose results are shift-added.

    Args:
        f (QuantSeq): features, any length >= 1
        g (QuantSeq): kernel, any length >= 1
        cfg (HiKonvConfig): packing configuration
        probe (KernelProbe, optional): instrumentation. Defaults to None.
        accumulate (str, optional): packed or unpacked. Defaults to "packed".
        tile_kernel (bool, optional): allow kernels longer than cfg.k. Defaults to True.

    Returns:
        List[int]: len(f) + len(g) - 1 outputs
    """
    assert accumulate in ACCUMULATE_MODES, logger.error(
        f"Accumulation can only be {sorted(ACCUMULATE_MODES)}, but got {accumulate}"
    )
    if not len(f) or not len(g):
        raise ShapeMismatch("convolution of an empty sequence")
    _check_operand_data(f.bitwidth, f.signed, cfg, OperandSide.A)
    _check_operand_data(g.bitwidth, g.signed, cfg, OperandSide.B)
    _check_fits(cfg)
    if len(g) > cfg.k and not tile_kernel:
        logger.error(f"Kernel of length {len(g)} exceeds k={cfg.k} and tiling is disabled")
        raise InfeasibleGeometry(f"kernel length {len(g)} > k={cfg.k} without tiling")
    chunks = _kernel_chunks(g.values, cfg.k)
    _check_headroom(cfg, _segment_terms(cfg, len(chunks[0]), accumulate))

    s, n = cfg.s, cfg.n
    blocks = _block_words(f.values, s, n)
    total = len(f) + len(g) - 1
    out = [0] * (len(blocks) * n + len(g) - 1)
    for j, chunk in enumerate(chunks):
        b = pack_values(chunk, s)
        words = [wide_multiply(a, b, cfg, probe).word for a in blocks]
        segments = _row_segments(words, s, n, len(chunk) - 1, cfg.signed, accumulate, probe)
        offset = j * cfg.k
        for m, v in enumerate(segments):
            out[offset + m] += v
    return out[:total]


def pack_kernel_rows(weights: Tensor4, cfg: HiKonvConfig) -> PackedKernel:
    """Pre-pack every kernel row once, reversed so that convolution yields correlation."""
    _check_operand_data(weights.bitwidth, weights.signed, cfg, OperandSide.B)
    _check_fits(cfg)
    c_out, c_in, kernel_size, _ = weights.dims
    rows = weights.data[..., ::-1].tolist()
    words = tuple(
        tuple(
            tuple(tuple(pack_values(chunk, cfg.s) for chunk in _kernel_chunks(row, cfg.k)) for row in channel)
            for channel in out_channel
        )
        for out_channel in rows
    )
    chunk_sizes = tuple(len(chunk) for chunk in _kernel_chunks(range(kernel_size), cfg.k))
    return PackedKernel(words, c_out, c_in, kernel_size, chunk_sizes, weights.bitwidth, weights.signed, cfg)


def _effective_group(cfg: HiKonvConfig, group_size: Optional[int], chunk: int) -> int:
    limit = (1 << cfg.g_b) // chunk
    if limit == 0:
        logger.error(f"{cfg.g_b} guard bits cannot hold one kernel row of {chunk} taps")
        raise InfeasibleGeometry(f"g_b={cfg.g_b} too small for kernel rows of {chunk}")
    requested = group_size if group_size is not None else cfg.mode.m
    if requested is None:
        return limit
    if requested < 1:
        raise RangeError(f"channel group size must be positive, but got {requested}")
    if requested > limit:
        logger.warning(f"Channel group size {requested} clipped to {limit} by g_b={cfg.g_b}")
        return limit
    return requested


def conv2d_layer(
    input: Tensor3,
    weights: Union[Tensor4, PackedKernel],
    cfg: HiKonvConfig,
    probe: Optional[KernelProbe] = None,
    group_size: Optional[int] = None,
    accumulate: str = "packed",
) -> Tensor3:
    """Valid 2-D convolution of a DNN layer.

    Every output row is the sum over input channels and kernel rows of 1-D row convolutions.
    Products of up to ``group_size`` input channels are added as packed words before the
    overlap-add split; groups and kernel rows are then summed in full precision.

    Args:
        input (Tensor3): feature map [C_i][H_i][W_i]
        weights (Tensor4 | PackedKernel): weights [C_o][C_i][K][K], or their packed rows
        cfg (HiKonvConfig): packing configuration, usually searched in dnn mode
        probe (KernelProbe, optional): instrumentation. Defaults to None.
        group_size (int, optional): channels per packed sum. Defaults to cfg.mode.m.
        accumulate (str, optional): packed, or unpacked to split every product on its own.
            Defaults to "packed".

    Returns:
        Tensor3: full-precision output [C_o][H_i-K+1][W_i-K+1]
    """
    assert accumulate in ACCUMULATE_MODES, logger.error(
        f"Accumulation can only be {sorted(ACCUMULATE_MODES)}, but got {accumulate}"
    )
    packed = weights if isinstance(weights, PackedKernel) else pack_kernel_rows(weights, cfg)
    if packed.cfg_ref is not None and (packed.cfg_ref.s, packed.cfg_ref.k) != (cfg.s, cfg.k):
        raise ShapeMismatch(f"kernel was packed for s={packed.cfg_ref.s}, k={packed.cfg_ref.k}, config has s={cfg.s}, k={cfg.k}")
    if packed.signed != cfg.signed:
        raise RangeError(f"kernel signed={packed.signed} but config signed={cfg.signed}")
    _check_operand_data(input.bitwidth, input.signed, cfg, OperandSide.A)
    c_in, h_in, w_in = input.dims
    kernel_size = packed.kernel_size
    if c_in != packed.c_in:
        logger.error(f"Input has {c_in} channels, but weights expect {packed.c_in}")
        raise ShapeMismatch(f"input channels {c_in} != weight channels {packed.c_in}")
    if kernel_size > h_in or kernel_size > w_in:
        raise ShapeMismatch(f"kernel {kernel_size} larger than input {h_in}x{w_in}")
    _check_fits(cfg)
    chunk = packed.chunk_sizes[0]
    if accumulate == "packed":
        group = _effective_group(cfg, group_size, chunk)
    else:
        _check_headroom(cfg, _segment_terms(cfg, chunk, accumulate))
        group = 1
    groups = [range(start, min(start + group, c_in)) for start in range(0, c_in, group)]

    s, n, signed = cfg.s, cfg.n, cfg.signed
    h_out, w_out = h_in - kernel_size + 1, w_in - kernel_size + 1
    rows = [[_block_words(row, s, n) for row in channel] for channel in input.data.tolist()]
    n_blocks = len(rows[0][0])
    out = np.zeros((packed.c_out, h_out, w_out), dtype=np.int64)
    for c_o in range(packed.c_out):
        w_rows = packed.words[c_o]
        for h in range(h_out):
            acc = [0] * (n_blocks * n + kernel_size - 1)
            for k_h in range(kernel_size):
                for j, chunk_size in enumerate(packed.chunk_sizes):
                    offset = j * cfg.k
                    for channels in groups:
                        words = [
                            sum(
                                wide_multiply(rows[c_i][h + k_h][x], w_rows[c_i][k_h][j], cfg, probe).word
                                for c_i in channels
                            )
                            for x in range(n_blocks)
                        ]
                        segments = _row_segments(words, s, n, chunk_size - 1, signed, accumulate, probe)
                        for m, v in enumerate(segments):
                            acc[offset + m] += v
            out[c_o, h] = acc[kernel_size - 1 : kernel_size - 1 + w_out]
    return Tensor3(out, FULL_PRECISION_BITS, True)
