"""
Description: common state of models built from packed convolution layers
Author: hikonv contributors
Date: 2022-05-09 02:14:55
LastEditors: hikonv contributors
LastEditTime: 2022-05-09 02:14:55
"""
from typing import Any, Dict, Optional

from torch import nn

from hikonv.layers.base_layer import HiKonvBaseLayer

__all__ = ["HiKonvBaseModel"]


class HiKonvBaseModel(nn.Module):
    _conv_linear = (HiKonvBaseLayer,)

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)

    def reset_parameters(self, random_state: Optional[int] = None) -> None:
        for name, m in self.named_modules():
            if isinstance(m, self._conv_linear):
                # deterministic seed, but different for different layer, and controllable by random_state
                m.reset_parameters(None if random_state is None else random_state + sum(map(ord, name)))

    def set_weight_bitwidth(self, w_bit: int) -> None:
        self.w_bit = w_bit
        for layer in self.modules():
            if isinstance(layer, self._conv_linear):
                layer.set_weight_bitwidth(w_bit)

    def set_input_bitwidth(self, in_bit: int) -> None:
        self.in_bit = in_bit
        for layer in self.modules():
            if isinstance(layer, self._conv_linear):
                layer.set_input_bitwidth(in_bit)

    def set_multiplier(self, bit_a: int, bit_b: int) -> None:
        self.bit_a, self.bit_b = bit_a, bit_b
        for layer in self.modules():
            if isinstance(layer, self._conv_linear):
                layer.set_multiplier(bit_a, bit_b)

    def switch_accumulate_to(self, accumulate: str) -> None:
        for layer in self.modules():
            if isinstance(layer, self._conv_linear):
                layer.switch_accumulate_to(accumulate)

    def load_parameters(self, param_dict: Dict[str, Dict[str, Any]]) -> None:
        """
        description: update parameters based on this parameter dictionary\\
        param param_dict {dict of dict} {layer_name: {param_name: param_tensor, ...}, ...}
        """
        for name, m in self.named_modules():
            if name in param_dict:
                m.load_parameters(param_dict[name])

    def get_num_weights(self) -> int:
        return sum(layer.weight.numel() for layer in self.modules() if isinstance(layer, self._conv_linear))

    def forward(self, x):
        raise NotImplementedError
