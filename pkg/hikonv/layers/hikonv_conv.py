"""
Description: 1-D and 2-D convolution layers running on packed wide multiplications
Author: hikonv contributors
Date: 2022-04-20 01:40:19
LastEditors: hikonv contributors
LastEditTime: 2022-05-09 04:02:51
"""
from typing import List, Optional, Union

from pyutils.general import logger
from torch import Tensor

from hikonv.devices.multiplier import GPP32Multiplier
from hikonv.exceptions import InfeasibleGeometry, ShapeMismatch
from hikonv.layers.base_layer import HiKonvBaseLayer
from hikonv.op.bitpack_op import QuantSeq
from hikonv.op.config import ConvMode, HiKonvConfig, max_group_size, search_optimal
from hikonv.op.kernel_op import KernelProbe, PackedKernel, Tensor3, Tensor4, conv1d, conv2d_layer, pack_kernel_rows

__all__ = [
    "HiKonvConv1d",
    "HiKonvConv2d",
]

DEFAULT_BITWIDTH = 4


class HiKonvConv1d(HiKonvBaseLayer):
    """
    Full 1-D convolution with a fixed kernel, searched in conv1d mode.
    A QuantSeq input gives a list of outputs, an integer tensor [L] or [N, L] gives an int64 tensor.
    """

    def __init__(
        self,
        weight: Union[QuantSeq, Tensor],
        bit_a: int = GPP32Multiplier.bit_a,
        bit_b: int = GPP32Multiplier.bit_b,
        in_bit: Optional[int] = None,
        w_bit: Optional[int] = None,
        signed: Optional[bool] = None,
        accumulate: str = "packed",
        tile_kernel: bool = True,
    ) -> None:
        bitwidth = getattr(weight, "bitwidth", DEFAULT_BITWIDTH)
        super().__init__(
            bit_a=bit_a,
            bit_b=bit_b,
            in_bit=bitwidth if in_bit is None else in_bit,
            w_bit=bitwidth if w_bit is None else w_bit,
            signed=getattr(weight, "signed", False) if signed is None else signed,
            accumulate=accumulate,
        )
        self.register_buffer("weight", self.to_int_tensor(weight))
        self.tile_kernel = tile_kernel
        self.qweight: Optional[QuantSeq] = None
        self.rebuild()

    @classmethod
    def from_weights(cls, weights: QuantSeq, *args, **kwargs) -> "HiKonvConv1d":
        return cls(weights, *args, **kwargs)

    def build_config(self) -> HiKonvConfig:
        return search_optimal(self.bit_a, self.bit_b, self.in_bit, self.w_bit, ConvMode.conv1d(), self.signed)

    def pack_weights(self) -> None:
        if self.weight.dim() != 1:
            raise ShapeMismatch(f"1-D kernel expected, got shape {tuple(self.weight.shape)}")
        # re-validate against the current weight bitwidth
        self.qweight = QuantSeq(self.weight.cpu().tolist(), self.w_bit, self.signed)
        if len(self.qweight) > self.cfg.k:
            if not self.tile_kernel:
                logger.error(f"Kernel of length {len(self.qweight)} exceeds k={self.cfg.k} and tiling is disabled")
                raise InfeasibleGeometry(f"kernel length {len(self.qweight)} > k={self.cfg.k} without tiling")
            logger.warning(
                f"Kernel of length {len(self.qweight)} is tiled into chunks of k={self.cfg.k}; "
                f"{-(-len(self.qweight) // self.cfg.k)} wide multiplications per block"
            )

    def _run(self, f: QuantSeq, probe: Optional[KernelProbe]) -> List[int]:
        return conv1d(f, self.qweight, self.cfg, probe, self.accumulate, self.tile_kernel)

    def forward(self, x: Union[QuantSeq, Tensor], probe: Optional[KernelProbe] = None) -> Union[List[int], Tensor]:
        if isinstance(x, QuantSeq):
            return self._run(x, probe)

        def run(sample: Tensor) -> Tensor:
            f = QuantSeq(sample.cpu().tolist(), self.in_bit, self.signed)
            return self._result(self._run(f, probe), sample.device)

        return self._batched(x, 1, run)

    def extra_repr(self) -> str:
        return f"kernel_size={len(self.qweight)}, " + super().extra_repr()


class HiKonvConv2d(HiKonvBaseLayer):
    """
    Valid 2-D convolution layer. Products of a group of input channels are summed as packed
    words, the group size defaults to the largest one that keeps the single-product throughput.
    A Tensor3 input gives a Tensor3, an integer tensor [C, H, W] or [N, C, H, W] gives an int64 tensor.
    """

    def __init__(
        self,
        weight: Union[Tensor4, Tensor],
        bit_a: int = GPP32Multiplier.bit_a,
        bit_b: int = GPP32Multiplier.bit_b,
        in_bit: Optional[int] = None,
        w_bit: Optional[int] = None,
        signed: Optional[bool] = None,
        accumulate: str = "packed",
        group_size: Optional[int] = None,
    ) -> None:
        bitwidth = getattr(weight, "bitwidth", DEFAULT_BITWIDTH)
        super().__init__(
            bit_a=bit_a,
            bit_b=bit_b,
            in_bit=bitwidth if in_bit is None else in_bit,
            w_bit=bitwidth if w_bit is None else w_bit,
            signed=getattr(weight, "signed", False) if signed is None else signed,
            accumulate=accumulate,
        )
        self.register_buffer("weight", self.to_int_tensor(weight))
        self.group_size = group_size
        self.qweight: Optional[Tensor4] = None
        self.packed: Optional[PackedKernel] = None
        self.rebuild()

    @classmethod
    def from_weights(cls, weights: Tensor4, *args, **kwargs) -> "HiKonvConv2d":
        return cls(weights, *args, **kwargs)

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    def build_config(self) -> HiKonvConfig:
        if self.weight.dim() != 4:
            raise ShapeMismatch(f"weights [C_o][C_i][K][K] expected, got shape {tuple(self.weight.shape)}")
        group = self.group_size
        if group is None:
            group = max_group_size(self.bit_a, self.bit_b, self.in_bit, self.w_bit, self.in_channels, self.signed)
        return search_optimal(self.bit_a, self.bit_b, self.in_bit, self.w_bit, ConvMode.dnn(group), self.signed)

    def pack_weights(self) -> None:
        self.qweight = Tensor4(self.weight.cpu().numpy(), self.w_bit, self.signed)
        self.packed = pack_kernel_rows(self.qweight, self.cfg)
        # guard bits were sized for min(n, k) terms per channel, the overlap-add needs a full chunk
        chunk = self.packed.chunk_sizes[0]
        limit = (1 << self.cfg.g_b) // chunk
        if limit == 0:
            logger.warning(
                f"g_b={self.cfg.g_b} cannot hold {chunk}-tap rows across blocks; splitting every product instead"
            )
            self.run_accumulate, self.run_group = "unpacked", 1
        else:
            if limit < self.cfg.mode.m:
                logger.warning(f"Channel group size {self.cfg.mode.m} clipped to {limit} by g_b={self.cfg.g_b}")
            self.run_accumulate, self.run_group = self.accumulate, min(limit, self.cfg.mode.m)

    def set_group_size(self, group_size: Optional[int]) -> None:
        self.group_size = group_size
        self.rebuild()

    def switch_accumulate_to(self, accumulate: str) -> None:
        super().switch_accumulate_to(accumulate)
        self.rebuild()

    def _run(self, x: Tensor3, probe: Optional[KernelProbe]) -> Tensor3:
        return conv2d_layer(x, self.packed, self.cfg, probe, self.run_group, self.run_accumulate)

    def forward(self, x: Union[Tensor3, Tensor], probe: Optional[KernelProbe] = None) -> Union[Tensor3, Tensor]:
        if isinstance(x, Tensor3):
            return self._run(x, probe)

        def run(sample: Tensor) -> Tensor:
            features = Tensor3(sample.cpu().numpy(), self.in_bit, self.signed)
            return self._result(self._run(features, probe).data, sample.device)

        return self._batched(x, 3, run)

    def extra_repr(self) -> str:
        s = f"{self.in_channels}, {self.out_channels}, kernel_size={self.kernel_size}, group_size={self.cfg.mode.m}, "
        return s + super().extra_repr()
