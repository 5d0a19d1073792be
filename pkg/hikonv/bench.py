"""
Description: latency and multiplication-count comparison of nested-loop and packed convolutions
Author: hikonv contributors
Date: 2022-04-20 05:47:16
LastEditors: hikonv contributors
LastEditTime: 2022-04-20 05:47:16
"""
import csv
import io
from dataclasses import dataclass, fields
from multiprocessing.dummy import Pool
from typing import Any, Callable, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import torch
import yaml
from pyutils.general import TimerCtx, logger

from hikonv.devices.multiplier import GPP32Multiplier
from hikonv.exceptions import EquivalenceFailure, RangeError
from hikonv.layers.hikonv_conv import HiKonvConv1d, HiKonvConv2d
from hikonv.models.ultranet import HiKonvUltraNet
from hikonv.op.bitpack_op import QuantSeq
from hikonv.op.config import MAX_QUANT_BITS
from hikonv.op.kernel_op import KernelProbe, Tensor3, Tensor4
from hikonv.op.oracle_op import count_naive_conv2d_mults, count_naive_ops, naive_conv1d, naive_conv2d

__all__ = [
    "CSV_HEADER",
    "SCENARIOS",
    "BenchRecord",
    "BenchSpec",
    "parse_shape",
    "run_bench",
    "run_model_bench",
    "run_benches",
    "emit_csv",
    "parse_csv",
    "load_scenarios",
]

CSV_HEADER = [
    "scenario",
    "p",
    "q",
    "shape",
    "signed",
    "naive_ns",
    "hikonv_ns",
    "naive_mults",
    "hikonv_wide_mults",
    "speedup",
    "mult_ratio",
]
SCENARIOS = ("conv1d", "conv2d", "model")
SHAPE_ARITY = {"conv1d": 2, "conv2d": 5, "model": 2}  # (L, K), (C_in, C_out, H, W, K) and (H, W)
INT_FIELDS = ("p", "q", "iters", "warmup", "bit_a", "bit_b", "seed")


def parse_shape(shape: Union[str, int, Sequence[int]]) -> Tuple[int, ...]:
    """``"16x16x12x12x3"``, a single integer, or a sequence of positive integers."""
    if isinstance(shape, str):
        parts = shape.strip().lower().split("x")
    elif isinstance(shape, int) and not isinstance(shape, bool):
        parts = [shape]
    else:
        parts = shape
    try:
        dims = tuple(int(d) for d in parts)
    except (TypeError, ValueError):
        raise RangeError(f"shape must be positive integers joined by 'x', got {shape!r}") from None
    if not dims or min(dims) < 1:
        raise RangeError(f"shape must be positive integers joined by 'x', got {shape!r}")
    return dims


@dataclass(frozen=True)
class BenchRecord:
    scenario: str
    p: int
    q: int
    shape: Tuple[int, ...]
    signed: bool
    naive_ns: int
    hikonv_ns: int
    naive_mults: int
    hikonv_wide_mults: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if min(self.naive_ns, self.hikonv_ns, self.naive_mults, self.hikonv_wide_mults) <= 0:
            raise RangeError(f"benchmark counts must be positive, got {self}")

    @property
    def speedup(self) -> float:
        return self.naive_ns / self.hikonv_ns

    @property
    def mult_ratio(self) -> float:
        return self.naive_mults / self.hikonv_wide_mults

    def as_row(self) -> List[str]:
        return [
            self.scenario,
            str(self.p),
            str(self.q),
            "x".join(str(d) for d in self.shape),
            "true" if self.signed else "false",
            str(self.naive_ns),
            str(self.hikonv_ns),
            str(self.naive_mults),
            str(self.hikonv_wide_mults),
            f"{self.speedup:.4f}",
            f"{self.mult_ratio:.4f}",
        ]


@dataclass(frozen=True)
class BenchSpec:
    """One scenario; the keys of a YAML scenario file mirror these fields."""

    scenario: str
    shape: Tuple[int, ...]
    p: int = 4
    q: int = 4
    signed: bool = False
    iters: int = 30
    warmup: int = 5
    bit_a: int = GPP32Multiplier.bit_a
    bit_b: int = GPP32Multiplier.bit_b
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise RangeError(f"Unknown scenario {self.scenario}, expected one of {SCENARIOS}")
        object.__setattr__(self, "shape", parse_shape(self.shape))
        for name in INT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise RangeError(f"{name} must be an integer, got {value!r}")
        if not isinstance(self.signed, bool):
            raise RangeError(f"signed must be true or false, got {self.signed!r}")
        if not (1 <= self.p <= MAX_QUANT_BITS and 1 <= self.q <= MAX_QUANT_BITS):
            raise RangeError(f"p and q must be in [1, {MAX_QUANT_BITS}], got p={self.p}, q={self.q}")
        if len(self.shape) != SHAPE_ARITY[self.scenario]:
            raise RangeError(f"{self.scenario} shape needs {SHAPE_ARITY[self.scenario]} dims, got {self.shape}")
        if self.iters < 1 or self.warmup < 0:
            raise RangeError(f"iters must be >= 1 and warmup >= 0, got {self.iters}, {self.warmup}")

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "BenchSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise RangeError(f"Unknown scenario keys {sorted(unknown)}")
        missing = {"scenario", "shape"} - set(d)
        if missing:
            raise RangeError(f"Scenario {d} lacks {sorted(missing)}")
        return cls(**d)


def _median_ns(intervals: Sequence[float]) -> int:
    return max(1, int(round(float(np.median(intervals)) * 1e9)))


def _verify(expected: Any, actual: Any, inputs: Dict[str, Any]) -> None:
    same = torch.equal(expected, actual) if isinstance(expected, torch.Tensor) else expected == actual
    if not same:
        logger.error(f"Packed output differs from the nested-loop output on {inputs}")
        if isinstance(expected, torch.Tensor):
            expected, actual = expected.tolist(), actual.tolist()
        raise EquivalenceFailure("benchmark outputs differ", inputs, expected, actual)


def _timed_pair(
    naive_fn: Callable[[], Any], hikonv_fn: Callable[[], Any], iters: int, warmup: int, inputs: Dict[str, Any]
) -> Tuple[int, int]:
    for _ in range(warmup):
        naive_fn()
        hikonv_fn()
    naive_t, hikonv_t = [], []
    for _ in range(iters):
        with TimerCtx() as t:
            expected = naive_fn()
        naive_t.append(t.interval)
        with TimerCtx() as t:
            actual = hikonv_fn()
        hikonv_t.append(t.interval)
        _verify(expected, actual, inputs)
    return _median_ns(naive_t), _median_ns(hikonv_t)


def _as_spec(spec: Union[BenchSpec, str], *args, **kwargs) -> BenchSpec:
    return spec if isinstance(spec, BenchSpec) else BenchSpec(spec, *args, **kwargs)


def run_bench(spec: Union[BenchSpec, str], *args, **kwargs) -> BenchRecord:
    """Time both convolution paths of a conv1d or conv2d scenario on identical seeded inputs.

    Every repetition is checked for equality before its timing counts. The wide-multiplication
    count comes from one instrumented run, the nested-loop count from its closed form.

    Args:
        spec (BenchSpec | str): scenario, or the scenario name followed by BenchSpec fields

    Returns:
        BenchRecord: medians and counts
    """
    spec = _as_spec(spec, *args, **kwargs)
    if spec.scenario == "model":
        raise RangeError("the model scenario yields one record per layer, use run_model_bench")
    rng = np.random.default_rng(spec.seed)
    counter = KernelProbe()
    if spec.scenario == "conv1d":
        length, kernel_length = spec.shape
        f = QuantSeq.random(rng, length, spec.p, spec.signed)
        g = QuantSeq.random(rng, kernel_length, spec.q, spec.signed)
        layer = HiKonvConv1d.from_weights(g, spec.bit_a, spec.bit_b, in_bit=spec.p)
        sample = f
        naive_fn = lambda: naive_conv1d(f.values, g.values)
        hikonv_fn = lambda: layer(f)
        naive_mults = count_naive_ops(length, kernel_length)[0]
        inputs = {"f": list(f.values), "g": list(g.values), "cfg": str(layer.cfg)}
    else:
        c_in, c_out, height, width, kernel_size = spec.shape
        x = Tensor3.random(rng, (c_in, height, width), spec.p, spec.signed)
        w = Tensor4.random(rng, (c_out, c_in, kernel_size, kernel_size), spec.q, spec.signed)
        layer = HiKonvConv2d.from_weights(w, spec.bit_a, spec.bit_b, in_bit=spec.p)
        sample = x
        naive_fn = lambda: naive_conv2d(x, w)
        hikonv_fn = lambda: layer(x)
        naive_mults = count_naive_conv2d_mults(c_in, c_out, height, width, kernel_size)
        inputs = {"shape": spec.shape, "seed": spec.seed, "cfg": str(layer.cfg)}

    _verify(naive_fn(), layer(sample, probe=counter), inputs)
    naive_ns, hikonv_ns = _timed_pair(naive_fn, hikonv_fn, spec.iters, spec.warmup, inputs)
    record = BenchRecord(
        spec.scenario, spec.p, spec.q, spec.shape, spec.signed, naive_ns, hikonv_ns, naive_mults, counter.wide_mults
    )
    logger.info(
        f"{spec.scenario} {record.shape} p={spec.p} q={spec.q} signed={spec.signed}: "
        f"speedup={record.speedup:.2f} mult_ratio={record.mult_ratio:.2f}"
    )
    return record


def run_model_bench(spec: Union[BenchSpec, str], *args, **kwargs) -> List[BenchRecord]:
    """Layer-wise and whole-model timing of the UltraNet-shaped stack on one seeded image.

    Each layer record times padding, convolution, re-quantization and pooling of that layer on
    the input the nested-loop path produced for it; its shape field is C_in x C_out x H x W x K
    of the padded input. The final ``model`` record times the whole forward pass.

    Returns:
        List[BenchRecord]: one ``model.<layer>`` record per layer, then the ``model`` record
    """
    spec = _as_spec(spec, *args, **kwargs)
    if spec.scenario != "model":
        raise RangeError(f"run_model_bench needs the model scenario, got {spec.scenario}")
    rng = np.random.default_rng(spec.seed)
    model = HiKonvUltraNet(
        in_bit=spec.p, w_bit=spec.q, signed=spec.signed, bit_a=spec.bit_a, bit_b=spec.bit_b, random_state=spec.seed
    )
    height, width = spec.shape
    x = torch.from_numpy(Tensor3.random(rng, (model.in_channels, height, width), spec.p, spec.signed).data)
    stage_inputs = model.stage_inputs(x)
    records = []
    for index, (name, layer) in enumerate(model.layers):
        features = stage_inputs[index]
        inputs = {"layer": name, "shape": spec.shape, "seed": spec.seed, "cfg": str(layer.cfg)}
        counter = KernelProbe()
        _verify(stage_inputs[index + 1], model.stage(index, features, probe=counter), inputs)
        naive_ns, hikonv_ns = _timed_pair(
            lambda: model.stage(index, features, reference=True),
            lambda: model.stage(index, features),
            spec.iters,
            spec.warmup,
            inputs,
        )
        _, h_pad, w_pad = model.pad(features, layer).shape
        shape = (layer.in_channels, layer.out_channels, h_pad, w_pad, layer.kernel_size)
        naive_mults = count_naive_conv2d_mults(*shape)
        records.append(
            BenchRecord(
                f"model.{name}", spec.p, spec.q, shape, spec.signed, naive_ns, hikonv_ns, naive_mults, counter.wide_mults
            )
        )
    inputs = {"shape": spec.shape, "seed": spec.seed}
    naive_ns, hikonv_ns = _timed_pair(lambda: model.reference_forward(x), lambda: model(x), spec.iters, spec.warmup, inputs)
    naive_mults = sum(r.naive_mults for r in records)
    wide_mults = sum(r.hikonv_wide_mults for r in records)
    record = BenchRecord("model", spec.p, spec.q, spec.shape, spec.signed, naive_ns, hikonv_ns, naive_mults, wide_mults)
    records.append(record)
    logger.info(
        f"model {record.shape} p={spec.p} q={spec.q} signed={spec.signed} over {len(model.layers)} layers: "
        f"speedup={record.speedup:.2f} mult_ratio={record.mult_ratio:.2f}"
    )
    return records


def _run_spec(spec: BenchSpec) -> List[BenchRecord]:
    return run_model_bench(spec) if spec.scenario == "model" else [run_bench(spec)]


def run_benches(specs: Iterable[Union[BenchSpec, Dict[str, Any]]], threads: int = 1) -> List[BenchRecord]:
    """Run scenarios in order, or on a thread pool when ``threads`` > 1. A model scenario adds
    one record per layer before its whole-model record."""
    specs = [s if isinstance(s, BenchSpec) else BenchSpec.from_dict(s) for s in specs]
    if threads > 1:
        with Pool(threads) as pool:
            results = pool.map(_run_spec, specs)
    else:
        results = [_run_spec(s) for s in specs]
    return [record for records in results for record in records]


def emit_csv(records: Iterable[BenchRecord]) -> bytes:
    records = list(records)
    if not records:
        raise RangeError("no benchmark records to emit")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for record in records:
        writer.writerow(record.as_row())
    return buffer.getvalue().encode("utf-8")


def parse_csv(data: Union[bytes, str]) -> List[BenchRecord]:
    """Inverse of emit_csv for the stored fields; the ratios are recomputed."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise RangeError(f"unexpected CSV header {reader.fieldnames}")
    return [
        BenchRecord(
            scenario=row["scenario"],
            p=int(row["p"]),
            q=int(row["q"]),
            shape=tuple(int(d) for d in row["shape"].split("x")),
            signed=row["signed"] == "true",
            naive_ns=int(row["naive_ns"]),
            hikonv_ns=int(row["hikonv_ns"]),
            naive_mults=int(row["naive_mults"]),
            hikonv_wide_mults=int(row["hikonv_wide_mults"]),
        )
        for row in reader
    ]


def load_scenarios(path: str) -> List[Dict[str, Any]]:
    """Scenario dicts from a YAML list, or from the ``scenarios`` key of a YAML mapping."""
    with open(path, "r") as f:
        try:
            content = yaml.safe_load(f)
        except yaml.YAMLError as e:
            logger.error(f"Cannot parse scenario file {path}: {e}")
            raise RangeError(f"{path} is not valid YAML: {e}") from None
    if isinstance(content, dict):
        content = content.get("scenarios")
    if not isinstance(content, list) or not all(isinstance(s, dict) for s in content):
        raise RangeError(f"{path} must hold a list of scenario mappings")
    return content
