"""
Description: naive reference convolutions and operation counts
Author: hikonv contributors
Date: 2022-04-19 06:02:44
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 06:02:44
"""
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pyutils.general import logger

from hikonv.exceptions import ShapeMismatch
from hikonv.op.kernel_op import FULL_PRECISION_BITS, Tensor3, Tensor4

__all__ = [
    "naive_conv1d",
    "naive_conv2d",
    "count_naive_ops",
    "count_naive_conv2d_mults",
    "reference_conv1d",
    "reference_conv2d",
]

ACC_BITS = 64
FLOAT64_EXACT_BITS = 53


def _check_accumulator(values: Iterable[int], bits: int = ACC_BITS) -> None:
    bound = 1 << (bits - 1)
    assert all(-bound <= v < bound for v in values), logger.error(f"Accumulator exceeds {bits} bits")


def naive_conv1d(f: Sequence[int], g: Sequence[int]) -> List[int]:
    """y[m] = sum over n + k = m of f[n] * g[k]."""
    f, g = list(f), list(g)
    assert f and g, logger.error("Convolution needs nonempty sequences")
    y = [0] * (len(f) + len(g) - 1)
    for n, f_n in enumerate(f):
        for k, g_k in enumerate(g):
            y[n + k] += f_n * g_k
    _check_accumulator(y)
    return y


def naive_conv2d(input: Tensor3, weights: Tensor4) -> Tensor3:
    c_in, h_in, w_in = input.dims
    c_out, w_c_in, kernel_size, _ = weights.dims
    if c_in != w_c_in:
        raise ShapeMismatch(f"input channels {c_in} != weight channels {w_c_in}")
    if kernel_size > h_in or kernel_size > w_in:
        raise ShapeMismatch(f"kernel {kernel_size} larger than input {h_in}x{w_in}")
    h_out, w_out = h_in - kernel_size + 1, w_in - kernel_size + 1
    x = input.data.tolist()
    w = weights.data.tolist()
    out = [[[0] * w_out for _ in range(h_out)] for _ in range(c_out)]
    for c_o in range(c_out):
        for h in range(h_out):
            for col in range(w_out):
                acc = 0
                for c_i in range(c_in):
                    for k_h in range(kernel_size):
                        for k_w in range(kernel_size):
                            acc += x[c_i][h + k_h][col + k_w] * w[c_o][c_i][k_h][k_w]
                out[c_o][h][col] = acc
    return Tensor3(np.array(out, dtype=np.int64).reshape(c_out, h_out, w_out), FULL_PRECISION_BITS, True)


def count_naive_ops(length: int, kernel_length: int) -> Tuple[int, int]:
    """(multiplications, additions) of a nested-loop 1-D convolution."""
    assert length >= 1 and kernel_length >= 1, logger.error(
        f"Lengths must be positive, but got {length}, {kernel_length}"
    )
    return length * kernel_length, (length - 1) * (kernel_length - 1)


def count_naive_conv2d_mults(c_in: int, c_out: int, h_in: int, w_in: int, kernel_size: int) -> int:
    h_out, w_out = h_in - kernel_size + 1, w_in - kernel_size + 1
    return c_out * c_in * kernel_size * kernel_size * h_out * w_out


def _to_exact_int(y: torch.Tensor) -> np.ndarray:
    out = y.round().to(torch.int64).numpy()
    assert np.abs(out).max(initial=0) < 1 << FLOAT64_EXACT_BITS, logger.error(
        "Float64 reference is not exact beyond 2^53"
    )
    return out


def reference_conv1d(f: Sequence[int], g: Sequence[int]) -> List[int]:
    """Full convolution through torch in float64."""
    f, g = list(f), list(g)
    x = torch.tensor(f, dtype=torch.float64).view(1, 1, -1)
    kernel = torch.tensor(g[::-1], dtype=torch.float64).view(1, 1, -1)
    y = F.conv1d(x, kernel, padding=len(g) - 1)
    return _to_exact_int(y.view(-1)).tolist()


def reference_conv2d(input: Tensor3, weights: Tensor4) -> Tensor3:
    """Valid cross-correlation through torch in float64."""
    if input.dims[0] != weights.dims[1]:
        raise ShapeMismatch(f"input channels {input.dims[0]} != weight channels {weights.dims[1]}")
    x = torch.from_numpy(input.data).double().unsqueeze(0)
    w = torch.from_numpy(weights.data).double()
    y = F.conv2d(x, w).squeeze(0)
    return Tensor3(_to_exact_int(y), FULL_PRECISION_BITS, True)
