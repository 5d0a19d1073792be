"""
Description: common state of packed convolution layers
Author: hikonv contributors
Date: 2022-04-20 01:14:37
LastEditors: hikonv contributors
LastEditTime: 2022-05-09 03:41:12
"""
from typing import Any, Dict, Optional, Sequence

import numpy as np
import torch
from pyutils.general import logger
from pyutils.torch_train import set_torch_deterministic
from torch import Tensor, nn

from hikonv.devices.multiplier import GPP32Multiplier
from hikonv.exceptions import RangeError, ShapeMismatch
from hikonv.op.bitpack_op import QuantSeq, value_range
from hikonv.op.config import HiKonvConfig
from hikonv.op.kernel_op import Tensor3, Tensor4

__all__ = ["HiKonvBaseLayer"]


class HiKonvBaseLayer(nn.Module):
    """Holds the multiplier geometry, bitwidths and the packed weights derived from them.

    The integer weights live in the ``weight`` buffer, so they show up in ``state_dict`` and
    follow ``.to()``. Every setter, and loading a state dict, rebuilds the searched config and
    re-packs the weights, so a layer is always ready to run.
    """

    def __init__(
        self,
        bit_a: int = GPP32Multiplier.bit_a,
        bit_b: int = GPP32Multiplier.bit_b,
        in_bit: int = 4,
        w_bit: int = 4,
        signed: bool = False,
        accumulate: str = "packed",
    ) -> None:
        super().__init__()
        assert accumulate in {"packed", "unpacked"}, logger.error(
            f"Accumulation not supported. Expected one from (packed, unpacked) but got {accumulate}."
        )
        self.bit_a = bit_a
        self.bit_b = bit_b
        self.in_bit = in_bit
        self.w_bit = w_bit
        self.signed = signed
        self.accumulate = accumulate
        self.cfg: Optional[HiKonvConfig] = None

    @staticmethod
    def to_int_tensor(values: Any) -> Tensor:
        if isinstance(values, QuantSeq):
            values = values.values
        elif isinstance(values, (Tensor3, Tensor4)):
            values = values.data
        if isinstance(values, Tensor):
            if values.is_floating_point() or values.is_complex():
                raise RangeError(f"integer tensors only, got {values.dtype}")
            return values.detach().to(torch.int64).clone()
        return torch.tensor(np.asarray(values, dtype=np.int64))

    def build_config(self) -> HiKonvConfig:
        raise NotImplementedError

    def pack_weights(self) -> None:
        raise NotImplementedError

    def rebuild(self) -> None:
        self.cfg = self.build_config()
        self.pack_weights()

    @classmethod
    def from_weights(cls, weights: Any, *args, **kwargs) -> "HiKonvBaseLayer":
        raise NotImplementedError

    def set_weight(self, weight: Any) -> None:
        device = self.weight.device
        self.weight = self.to_int_tensor(weight).to(device)
        self.rebuild()

    def reset_parameters(self, random_state: Optional[int] = None) -> None:
        """Draw fresh uniform weights over the current weight bitwidth."""
        if random_state is not None:
            set_torch_deterministic(random_state)
        lo, hi = value_range(self.w_bit, self.signed)
        self.set_weight(torch.randint(lo, hi + 1, tuple(self.weight.shape), dtype=torch.int64))

    def load_parameters(self, param_dict: Dict[str, Any]) -> None:
        """
        description: update parameters based on this parameter dictionary\\
        param param_dict {dict} {param_name: param_tensor, ...}
        """
        for name, param in param_dict.items():
            if name != "weight":
                raise RangeError(f"Unknown parameter {name}, packed layers only hold weight")
            self.set_weight(param)

    def _load_from_state_dict(self, *args, **kwargs) -> None:
        super()._load_from_state_dict(*args, **kwargs)
        self.rebuild()

    def set_weight_bitwidth(self, w_bit: int) -> None:
        self.w_bit = w_bit
        self.rebuild()

    def set_input_bitwidth(self, in_bit: int) -> None:
        self.in_bit = in_bit
        self.rebuild()

    def set_multiplier(self, bit_a: int, bit_b: int) -> None:
        self.bit_a = bit_a
        self.bit_b = bit_b
        self.rebuild()

    def switch_accumulate_to(self, accumulate: str) -> None:
        assert accumulate in {"packed", "unpacked"}, logger.error(
            f"Accumulation not supported. Expected one from (packed, unpacked) but got {accumulate}."
        )
        self.accumulate = accumulate

    @property
    def ops_per_mult(self) -> int:
        return self.cfg.ops

    def _batched(self, x: Tensor, sample_ndim: int, run) -> Tensor:
        # a leading batch dimension is run sample by sample
        x = self.to_int_tensor(x)
        if x.dim() == sample_ndim + 1:
            return torch.stack([run(sample) for sample in x])
        if x.dim() != sample_ndim:
            raise ShapeMismatch(f"{type(self).__name__} expects {sample_ndim} or {sample_ndim + 1} dims, got {x.dim()}")
        return run(x)

    @staticmethod
    def _result(values: Sequence, device: torch.device) -> Tensor:
        return torch.as_tensor(np.asarray(values, dtype=np.int64)).to(device)

    def forward(self, x, probe=None):
        raise NotImplementedError

    def extra_repr(self) -> str:
        s = f"bit_a={self.bit_a}, bit_b={self.bit_b}, in_bit={self.in_bit}, w_bit={self.w_bit}, signed={self.signed}"
        if self.cfg is not None:
            s += f", {self.cfg}"
        return s
