"""
Description: typed errors raised by the packing, kernel, file-format and benchmark layers
Author: hikonv contributors
Date: 2022-04-19 03:10:12
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 03:10:12
"""
from typing import Any, Optional

__all__ = [
    "HiKonvError",
    "InfeasibleGeometry",
    "LaneOverflow",
    "RangeError",
    "TruncatedStream",
    "ShapeMismatch",
    "BadMagic",
    "BadVersion",
    "EquivalenceFailure",
]


class HiKonvError(Exception):
    pass


class InfeasibleGeometry(HiKonvError):
    """No packing fits the multiplier, or the guard bits cannot hold the accumulation."""


class LaneOverflow(HiKonvError):
    """More elements than the operand has slices for."""


class RangeError(HiKonvError, ValueError):
    """A value or bitwidth lies outside its representable range."""


class TruncatedStream(HiKonvError):
    pass


class ShapeMismatch(HiKonvError):
    pass


class BadMagic(HiKonvError):
    pass


class BadVersion(HiKonvError):
    pass


class EquivalenceFailure(HiKonvError):
    """Packed result differs from the reference.

    The first counterexample is kept on the exception so that callers can print it.
    """

    def __init__(
        self, message: str, inputs: Optional[Any] = None, expected: Optional[Any] = None, actual: Optional[Any] = None
    ) -> None:
        super().__init__(message)
        self.inputs = inputs
        self.expected = expected
        self.actual = actual

    def describe(self) -> str:
        lines = [str(self)]
        if self.inputs is not None:
            lines.append(f"  inputs:   {self.inputs}")
        if self.expected is not None:
            lines.append(f"  expected: {self.expected}")
        if self.actual is not None:
            lines.append(f"  actual:   {self.actual}")
        return "\n".join(lines)
