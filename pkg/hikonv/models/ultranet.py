"""
Description: desk-scale UltraNet-shaped detector backbone on packed 2-D convolutions
Author: hikonv contributors
Date: 2022-05-09 02:31:20
LastEditors: hikonv contributors
LastEditTime: 2022-05-09 02:31:20
"""
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from pyutils.general import logger
from torch import Tensor, nn

from hikonv.devices.multiplier import GPP32Multiplier
from hikonv.exceptions import ShapeMismatch
from hikonv.layers.hikonv_conv import HiKonvConv2d
from hikonv.models.base_model import HiKonvBaseModel
from hikonv.op.bitpack_op import value_range
from hikonv.op.config import ceil_log2
from hikonv.op.kernel_op import KernelProbe, Tensor3
from hikonv.op.oracle_op import naive_conv2d

__all__ = ["HiKonvUltraNet"]

ULTRANET_CHANNELS = (16, 32, 64, 64, 64, 64, 64, 64)
ULTRANET_HEAD = 36  # 6 anchors x (4 box + 1 object + 1 class)


class HiKonvUltraNet(HiKonvBaseModel):
    """
    Stack of 3x3 same-padded convolutions, each followed by integer re-quantization, with 2x2 max
    pooling after the first ``pool_layers`` of them, and a 1x1 head. Activations between layers
    are ReLU-clamped and right-shifted back to ``in_bit`` bits, the head keeps full precision.
    The channel widths default to a quarter of UltraNet.
    """

    _conv_linear = (HiKonvConv2d,)

    def __init__(
        self,
        in_channels: int = 3,
        channels: Sequence[int] = tuple(c // 4 for c in ULTRANET_CHANNELS),
        head_channels: int = ULTRANET_HEAD,
        pool_layers: int = 4,
        kernel_size: int = 3,
        in_bit: int = 4,
        w_bit: int = 4,
        signed: bool = False,
        bit_a: int = GPP32Multiplier.bit_a,
        bit_b: int = GPP32Multiplier.bit_b,
        accumulate: str = "packed",
        random_state: Optional[int] = 0,
    ) -> None:
        super().__init__()
        assert 0 <= pool_layers <= len(channels), logger.error(
            f"Pooling layers must be in [0, {len(channels)}], but got {pool_layers}"
        )
        self.in_channels = in_channels
        self.channels = tuple(channels)
        self.head_channels = head_channels
        self.pool_layers = pool_layers
        self.kernel_size = kernel_size
        self.in_bit = in_bit
        self.w_bit = w_bit
        self.signed = signed
        self.bit_a = bit_a
        self.bit_b = bit_b

        def conv(c_in: int, c_out: int, k: int) -> HiKonvConv2d:
            weight = torch.zeros(c_out, c_in, k, k, dtype=torch.int64)
            return HiKonvConv2d(weight, bit_a, bit_b, in_bit=in_bit, w_bit=w_bit, signed=signed, accumulate=accumulate)

        widths = (in_channels,) + self.channels
        self.features = nn.ModuleList([conv(c_in, c_out, kernel_size) for c_in, c_out in zip(widths, widths[1:])])
        self.head = conv(widths[-1], head_channels, 1)
        self.reset_parameters(random_state)

    @property
    def layers(self) -> List[Tuple[str, HiKonvConv2d]]:
        return [(f"conv{i}", layer) for i, layer in enumerate(self.features)] + [("head", self.head)]

    def requant_shift(self, layer: HiKonvConv2d) -> int:
        # brings the accumulator of fan_in products back to roughly the input range
        fan_in = layer.in_channels * layer.kernel_size ** 2
        return ceil_log2(fan_in) // (2 if self.signed else 1) + self.w_bit - 1

    def requantize(self, y: Tensor, layer: HiKonvConv2d) -> Tensor:
        hi = value_range(self.in_bit, self.signed)[1]
        return (y.clamp(min=0) >> self.requant_shift(layer)).clamp(max=hi)

    @staticmethod
    def max_pool(x: Tensor) -> Tensor:
        h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
        x = x[..., :h, :w]
        return x.reshape(*x.shape[:-2], h // 2, 2, w // 2, 2).amax(dim=(-3, -1))

    def pad(self, x: Tensor, layer: HiKonvConv2d) -> Tensor:
        margin = layer.kernel_size // 2
        return F.pad(x, (margin, margin, margin, margin)) if margin else x

    def reference_conv(self, x: Tensor, layer: HiKonvConv2d) -> Tensor:
        """Nested-loop convolution of every sample, with the same integer semantics."""

        def run(sample: Tensor) -> Tensor:
            out = naive_conv2d(Tensor3(sample.cpu().numpy(), self.in_bit, self.signed), layer.qweight)
            return torch.from_numpy(out.data).to(sample.device)

        return torch.stack([run(s) for s in x]) if x.dim() == 4 else run(x)

    def stage(self, index: int, x: Tensor, reference: bool = False, probe: Optional[KernelProbe] = None) -> Tensor:
        """One layer: padding, convolution, and for the feature layers re-quantization and pooling."""
        _, layer = self.layers[index]
        x = self.pad(x, layer)
        y = self.reference_conv(x, layer) if reference else layer(x, probe=probe)
        if layer is self.head:
            return y
        y = self.requantize(y, layer)
        return self.max_pool(y) if index < self.pool_layers else y

    def stage_inputs(self, x: Tensor) -> List[Tensor]:
        """Input of every stage, followed by the model output, along the nested-loop path."""
        x = self.check_input(x)
        outs = [x]
        for index in range(len(self.layers)):
            outs.append(self.stage(index, outs[-1], reference=True))
        return outs

    def check_input(self, x: Tensor) -> Tensor:
        x = HiKonvConv2d.to_int_tensor(x)
        if x.dim() not in {3, 4} or x.shape[-3] != self.in_channels:
            raise ShapeMismatch(f"expected [N,] {self.in_channels} x H x W input, got shape {tuple(x.shape)}")
        smallest = 1 << self.pool_layers
        if min(x.shape[-2:]) < smallest:
            raise ShapeMismatch(f"{self.pool_layers} poolings need inputs of at least {smallest}x{smallest}")
        return x

    def reference_forward(self, x: Tensor) -> Tensor:
        return self.stage_inputs(x)[-1]

    def forward(self, x: Tensor, probe: Optional[KernelProbe] = None) -> Tensor:
        x = self.check_input(x)
        for index in range(len(self.layers)):
            x = self.stage(index, x, probe=probe)
        return x
