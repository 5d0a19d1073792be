"""
Description: QTSR, a bit-exact file format for quantized and full-precision integer tensors
Author: hikonv contributors
Date: 2022-04-20 03:05:52
LastEditors: hikonv contributors
LastEditTime: 2022-04-20 03:05:52
"""
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO, Optional, Sequence, Tuple, Union

import numpy as np
from pyutils.general import logger

from hikonv.exceptions import BadMagic, BadVersion, RangeError, ShapeMismatch, TruncatedStream
from hikonv.op.bitpack_op import QuantSeq, compress_bits, decompress_bits, value_range
from hikonv.op.config import MAX_QUANT_BITS
from hikonv.op.kernel_op import FULL_PRECISION_BITS, Tensor3, Tensor4

__all__ = [
    "MAGIC",
    "VERSION",
    "QTensor",
    "header_size",
    "payload_size",
    "encode_qtensor",
    "decode_qtensor",
    "write_qtensor",
    "read_qtensor",
]

MAGIC = b"QTSR"
VERSION = 1
MAX_NDIM = 4
_PREFIX = struct.Struct("<4sBBBB")  # magic, version, bitwidth, signed, ndim

PathOrStream = Union[str, os.PathLike, BinaryIO]


def header_size(ndim: int) -> int:
    return _PREFIX.size + 4 * ndim


def payload_size(count: int, bitwidth: int) -> int:
    if bitwidth == FULL_PRECISION_BITS:
        return 4 * count
    return (count * bitwidth + 7) // 8


@dataclass(eq=False)
class QTensor:
    dims: Tuple[int, ...]
    values: np.ndarray
    bitwidth: int
    signed: bool = False

    def __post_init__(self) -> None:
        self.dims = tuple(int(d) for d in self.dims)
        self.values = np.asarray(self.values, dtype=np.int64).reshape(-1)
        if not 1 <= len(self.dims) <= MAX_NDIM:
            raise RangeError(f"Only support 1 - {MAX_NDIM} dims, but got {len(self.dims)}")
        if any(d <= 0 or d >= 1 << 32 for d in self.dims):
            raise RangeError(f"dims must be positive 32-bit counts, got {self.dims}")
        if int(np.prod(self.dims)) != self.values.size:
            logger.error(f"Dims {self.dims} hold {int(np.prod(self.dims))} elements, but got {self.values.size}")
            raise ShapeMismatch(f"{self.values.size} values do not fill dims {self.dims}")
        if not (1 <= self.bitwidth <= MAX_QUANT_BITS or self.bitwidth == FULL_PRECISION_BITS):
            raise RangeError(f"bitwidth must be 1 - {MAX_QUANT_BITS} or {FULL_PRECISION_BITS}, got {self.bitwidth}")
        if self.signed and self.bitwidth == 1:
            raise RangeError("Binary tensors are unsigned {0, 1}")
        lo, hi = value_range(self.bitwidth, self.signed)
        if self.values.min() < lo or self.values.max() > hi:
            raise RangeError(f"values outside [{lo}, {hi}] for bitwidth {self.bitwidth}")

    @property
    def count(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, QTensor):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.bitwidth == other.bitwidth
            and self.signed == other.signed
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_seq(cls, seq: QuantSeq, dims: Optional[Sequence[int]] = None) -> "QTensor":
        return cls(tuple(dims) if dims is not None else (len(seq),), list(seq.values), seq.bitwidth, seq.signed)

    @classmethod
    def from_tensor(cls, tensor: Union[Tensor3, Tensor4]) -> "QTensor":
        return cls(tensor.dims, tensor.data, tensor.bitwidth, tensor.signed)

    @classmethod
    def from_values(cls, values: Sequence[int], bitwidth: int = FULL_PRECISION_BITS, signed: bool = True) -> "QTensor":
        return cls((len(values),), values, bitwidth, signed)

    def to_seq(self) -> QuantSeq:
        if self.bitwidth > MAX_QUANT_BITS:
            raise RangeError(f"{self.bitwidth}-bit tensor is not a low-bitwidth sequence")
        return QuantSeq(self.values.tolist(), self.bitwidth, self.signed)

    def to_tensor3(self) -> Tensor3:
        if len(self.dims) != 3:
            raise ShapeMismatch(f"expected 3 dims [C][H][W], got {self.dims}")
        return Tensor3(self.values.reshape(self.dims), self.bitwidth, self.signed)

    def to_tensor4(self) -> Tensor4:
        if len(self.dims) != 4:
            raise ShapeMismatch(f"expected 4 dims [C_o][C_i][K][K], got {self.dims}")
        return Tensor4(self.values.reshape(self.dims), self.bitwidth, self.signed)


def _as_qtensor(data, dims: Optional[Sequence[int]]) -> QTensor:
    if isinstance(data, QTensor):
        tensor = data
    elif isinstance(data, QuantSeq):
        if not len(data):
            raise RangeError("cannot store an empty tensor")
        return QTensor.from_seq(data, dims)
    elif isinstance(data, (Tensor3, Tensor4)):
        tensor = QTensor.from_tensor(data)
    else:
        raise TypeError(f"cannot store {type(data).__name__} as a QTSR tensor")
    if dims is not None and tuple(dims) != tensor.dims:
        return QTensor(dims, tensor.values, tensor.bitwidth, tensor.signed)
    return tensor


def encode_qtensor(tensor: QTensor) -> bytes:
    header = _PREFIX.pack(MAGIC, VERSION, tensor.bitwidth, int(tensor.signed), len(tensor.dims))
    header += struct.pack(f"<{len(tensor.dims)}I", *tensor.dims)
    if tensor.bitwidth == FULL_PRECISION_BITS:
        payload = tensor.values.astype("<i4" if tensor.signed else "<u4").tobytes()
    else:
        payload = compress_bits(tensor.to_seq())
    return header + payload


def write_qtensor(
    target: PathOrStream, data: Union[QTensor, QuantSeq, Tensor3, Tensor4], dims: Optional[Sequence[int]] = None
) -> int:
    """Write a header followed by the packed payload.

    Args:
        target (str | PathLike | BinaryIO): destination path or writable binary stream
        data (QTensor | QuantSeq | Tensor3 | Tensor4): tensor to store
        dims (Sequence[int], optional): shape for a flat sequence. Defaults to the natural shape.

    Returns:
        int: bytes written
    """
    blob = encode_qtensor(_as_qtensor(data, dims))
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as f:
            f.write(blob)
    else:
        target.write(blob)
    return len(blob)


def decode_qtensor(blob: bytes) -> QTensor:
    if len(blob) < len(MAGIC):
        raise TruncatedStream(f"{len(blob)} bytes cannot hold a QTSR header")
    if blob[: len(MAGIC)] != MAGIC:
        logger.error(f"Expected magic {MAGIC!r}, but got {bytes(blob[:len(MAGIC)])!r}")
        raise BadMagic(f"not a QTSR stream: magic {bytes(blob[:len(MAGIC)])!r}")
    if len(blob) < _PREFIX.size:
        raise TruncatedStream(f"{len(blob)} bytes cannot hold a QTSR header")
    _, version, bitwidth, signed, ndim = _PREFIX.unpack_from(blob)
    if version != VERSION:
        logger.error(f"Only support QTSR version {VERSION}, but got {version}")
        raise BadVersion(f"unsupported QTSR version {version}")
    if signed not in (0, 1):
        raise RangeError(f"signed flag must be 0 or 1, got {signed}")
    if not (1 <= bitwidth <= MAX_QUANT_BITS or bitwidth == FULL_PRECISION_BITS):
        raise RangeError(f"bitwidth must be 1 - {MAX_QUANT_BITS} or {FULL_PRECISION_BITS}, got {bitwidth}")
    if not 1 <= ndim <= MAX_NDIM:
        raise RangeError(f"Only support 1 - {MAX_NDIM} dims, but got {ndim}")
    offset = header_size(ndim)
    if len(blob) < offset:
        raise TruncatedStream(f"header needs {offset} bytes, stream holds {len(blob)}")
    dims = struct.unpack_from(f"<{ndim}I", blob, _PREFIX.size)
    count = int(np.prod(dims))
    if count == 0:
        raise RangeError(f"dims {dims} describe an empty tensor")
    size = payload_size(count, bitwidth)
    payload = blob[offset:]
    if len(payload) < size:
        logger.error(f"Payload needs {size} bytes, but got {len(payload)}")
        raise TruncatedStream(f"payload holds {len(payload)} bytes, {size} needed")
    if len(payload) > size:
        logger.warning(f"Ignoring {len(payload) - size} trailing bytes after the QTSR payload")
    if bitwidth == FULL_PRECISION_BITS:
        values = np.frombuffer(bytes(payload[:size]), dtype="<i4" if signed else "<u4").astype(np.int64)
    else:
        values = decompress_bits(payload, bitwidth, count, bool(signed)).values
    return QTensor(dims, values, bitwidth, bool(signed))


def read_qtensor(source: Union[PathOrStream, bytes]) -> QTensor:
    """Exact inverse of write_qtensor."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        blob = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            blob = f.read()
    else:
        blob = source.read()
    return decode_qtensor(blob)
