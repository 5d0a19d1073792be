"""
Description: wide-multiplier geometries that the packing search targets
Author: hikonv contributors
Date: 2022-04-19 03:21:40
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 03:21:40
"""

__all__ = [
    "DSP48E2Multiplier",
    "GPP32Multiplier",
    "GPP64Multiplier",
    "multiplier_dict",
    "get_multiplier",
]


class DSP48E2Multiplier:
    bit_a = 27  # pre-adder port
    bit_b = 18
    description = "Xilinx UltraScale DSP48E2 27x18 signed multiplier"


class GPP32Multiplier:
    bit_a = 32
    bit_b = 32
    description = "general purpose processor, 32-bit integer multiply with 64-bit product"


class GPP64Multiplier:
    bit_a = 64
    bit_b = 64
    description = "general purpose processor, 64-bit integer multiply with 128-bit product"


multiplier_dict = {
    "dsp48e2": DSP48E2Multiplier,
    "gpp32": GPP32Multiplier,
    "gpp64": GPP64Multiplier,
}


def get_multiplier(name: str):
    try:
        return multiplier_dict[name.lower()]
    except KeyError:
        raise KeyError(f"Unknown multiplier {name}, expected one of {sorted(multiplier_dict)}") from None
