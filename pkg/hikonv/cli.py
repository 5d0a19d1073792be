"""
Description: command-line front end: packing search, throughput tables, convolutions, benchmarks and selftest
Author: hikonv contributors
Date: 2022-04-21 02:11:45
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 02:11:45
"""
import argparse
import sys
from typing import Optional, Sequence, Tuple

from pyutils.general import logger

from hikonv.bench import SCENARIOS, BenchSpec, emit_csv, load_scenarios, parse_shape, run_benches
from hikonv.devices.multiplier import multiplier_dict
from hikonv.exceptions import EquivalenceFailure, HiKonvError, RangeError
from hikonv.layers.hikonv_conv import HiKonvConv1d, HiKonvConv2d
from hikonv.op.config import MAX_QUANT_BITS, ConvMode, format_throughput_csv, search_optimal, throughput_table
from hikonv.op.kernel_op import FULL_PRECISION_BITS, KernelProbe
from hikonv.op.oracle_op import naive_conv1d, naive_conv2d
from hikonv.qtensor import QTensor, read_qtensor, write_qtensor
from hikonv.selftest import MAX_EXHAUSTIVE_BITS, run_selftest
from hikonv.version import __version__

__all__ = ["EXIT_OK", "EXIT_USAGE", "EXIT_MISMATCH", "build_parser", "main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISMATCH = 3
DEFAULT_DEVICE = "gpp32"
DEFAULT_SHAPES = {"conv2d": (16, 16, 12, 12, 3), "model": (32, 32)}  # C_in x C_out x H x W x K and H x W


def _bits(value: str) -> int:
    bits = int(value)
    if not 1 <= bits <= MAX_QUANT_BITS:
        raise argparse.ArgumentTypeError(f"bitwidth must be in [1, {MAX_QUANT_BITS}], got {bits}")
    return bits


def _positive(value: str) -> int:
    count = int(value)
    if count < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {count}")
    return count


def _non_negative(value: str) -> int:
    count = int(value)
    if count < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {count}")
    return count


def _exhaustive_bits(value: str) -> int:
    bits = _non_negative(value)
    if bits > MAX_EXHAUSTIVE_BITS:
        raise argparse.ArgumentTypeError(f"exhaustive sweeps stop at {MAX_EXHAUSTIVE_BITS} bits, got {bits}")
    return bits


def _shape(value: str) -> Tuple[int, ...]:
    try:
        return parse_shape(value)
    except RangeError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _add_geometry(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--device", choices=sorted(multiplier_dict), default=DEFAULT_DEVICE, help="multiplier preset (default gpp32)"
    )
    parser.add_argument("--bit-a", type=_positive, default=None, help="width of multiplicand A, overrides --device")
    parser.add_argument("--bit-b", type=_positive, default=None, help="width of multiplicand B, overrides --device")


def _add_mode(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=("single", "conv1d", "dnn"), default="single", help="accumulation mode")
    parser.add_argument("--m", type=_positive, default=None, help="channel group size of dnn mode")


def _geometry(args: argparse.Namespace) -> Tuple[int, int]:
    device = multiplier_dict[args.device]
    bit_a = device.bit_a if args.bit_a is None else args.bit_a
    bit_b = device.bit_b if args.bit_b is None else args.bit_b
    return bit_a, bit_b


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hikonv", description="Low-bitwidth convolution with several outputs per wide multiplication"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    sp = subparsers.add_parser("search", help="optimal packing for one multiplier and bitwidth pair")
    _add_geometry(sp)
    sp.add_argument("--p", type=_bits, required=True, help="feature bitwidth")
    sp.add_argument("--q", type=_bits, required=True, help="kernel bitwidth")
    sp.add_argument("--signed", action="store_true", help="signed operands")
    _add_mode(sp)
    sp.set_defaults(func=cmd_search)

    sp = subparsers.add_parser("table", help="throughput table over all bitwidth pairs as CSV")
    _add_geometry(sp)
    sp.add_argument("--p-max", type=_bits, default=MAX_QUANT_BITS, help="largest feature bitwidth")
    sp.add_argument("--q-max", type=_bits, default=MAX_QUANT_BITS, help="largest kernel bitwidth")
    _add_mode(sp)
    sp.add_argument("--out", default=None, help="CSV file, stdout when omitted")
    sp.set_defaults(func=cmd_table)

    for name, help_text in (("conv1d", "full 1-D convolution of QTSR files"), ("conv2d", "valid 2-D layer of QTSR files")):
        sp = subparsers.add_parser(name, help=help_text)
        _add_geometry(sp)
        sp.add_argument("--input", required=True, help="feature tensor (QTSR)")
        sp.add_argument("--kernel", required=True, help="kernel tensor (QTSR)")
        sp.add_argument("--out", required=True, help="full-precision output tensor (QTSR)")
        sp.add_argument("--naive", action="store_true", help="use the nested-loop reference")
        sp.add_argument("--verify", action="store_true", help="compute both paths and compare")
        sp.add_argument("--accumulate", choices=("packed", "unpacked"), default="packed")
        if name == "conv1d":
            sp.add_argument("--no-tile", action="store_true", help="reject kernels longer than k")
            sp.set_defaults(func=cmd_conv1d)
        else:
            sp.add_argument("--m", type=_positive, default=None, help="channel group size")
            sp.set_defaults(func=cmd_conv2d)

    sp = subparsers.add_parser("bench", help="time nested-loop against packed convolution")
    _add_geometry(sp)
    sp.add_argument("--scenario", choices=SCENARIOS, default="conv1d")
    sp.add_argument("--len", type=_positive, default=1 << 16, help="conv1d feature length")
    sp.add_argument("--k", type=_positive, default=3, help="conv1d kernel length")
    sp.add_argument(
        "--shape", type=_shape, default=None, help="conv2d C_in x C_out x H x W x K (16x16x12x12x3), model H x W (32x32)"
    )
    sp.add_argument("--p", type=_bits, default=4, help="feature bitwidth")
    sp.add_argument("--q", type=_bits, default=4, help="kernel bitwidth")
    sp.add_argument("--signed", action="store_true", help="signed operands")
    sp.add_argument("--iters", type=_positive, default=30, help="timed repetitions")
    sp.add_argument("--warmup", type=_non_negative, default=5, help="untimed repetitions")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=_positive, default=1, help="run independent scenarios in parallel")
    sp.add_argument("--config", default=None, help="YAML list of scenarios, replaces the single-scenario flags")
    sp.add_argument("--out", default=None, help="CSV file, stdout when omitted")
    sp.set_defaults(func=cmd_bench)

    sp = subparsers.add_parser("selftest", help="exhaustive and randomized equivalence suites")
    _add_geometry(sp)
    sp.add_argument("--exhaustive-bits", type=_exhaustive_bits, default=2, help=f"at most {MAX_EXHAUSTIVE_BITS}")
    sp.add_argument("--random-cases", type=_non_negative, default=10000)
    sp.add_argument("--conv2d-cases", type=_non_negative, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=_positive, default=1)
    sp.add_argument("--no-progress", action="store_true", help="hide progress bars")
    sp.set_defaults(func=cmd_selftest)
    return parser


def cmd_search(args: argparse.Namespace) -> int:
    bit_a, bit_b = _geometry(args)
    mode = ConvMode.parse(args.mode, args.m)
    cfg = search_optimal(bit_a, bit_b, args.p, args.q, mode, args.signed)
    print(
        f"{bit_a}x{bit_b} multiplier, {args.p}x{args.q}-bit {mode}: {cfg.n} features x {cfg.k} kernel taps "
        f"in {cfg.s}-bit slices ({cfg.g_b} guard bits), {cfg.ops} ops per multiplication"
    )
    print(cfg)
    return EXIT_OK


def cmd_table(args: argparse.Namespace) -> int:
    bit_a, bit_b = _geometry(args)
    mode = ConvMode.parse(args.mode, args.m)
    rows = throughput_table(bit_a, bit_b, range(1, args.p_max + 1), range(1, args.q_max + 1), mode)
    text = format_throughput_csv(rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as f:
            f.write(text)
        logger.info(f"Wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _report_written(path: str, nbytes: int, probe: Optional[KernelProbe]) -> None:
    line = f"out={path} bytes={nbytes}"
    if probe is not None:
        line += f" wide_mults={probe.wide_mults}"
    print(line)


def cmd_conv1d(args: argparse.Namespace) -> int:
    bit_a, bit_b = _geometry(args)
    f = read_qtensor(args.input).to_seq()
    g = read_qtensor(args.kernel).to_seq()
    probe = None
    if args.naive and not args.verify:
        out = naive_conv1d(f, g)
    else:
        layer = HiKonvConv1d(
            g, bit_a, bit_b, in_bit=f.bitwidth, signed=g.signed, accumulate=args.accumulate, tile_kernel=not args.no_tile
        )
        probe = KernelProbe()
        out = layer(f, probe=probe)
        if args.verify:
            expected = naive_conv1d(f, g)
            if out != expected:
                raise EquivalenceFailure(
                    "packed conv1d differs from the reference", {"f": f.values, "g": g.values}, expected, out
                )
    nbytes = write_qtensor(args.out, QTensor.from_values(out, FULL_PRECISION_BITS, True))
    _report_written(args.out, nbytes, probe)
    return EXIT_OK


def cmd_conv2d(args: argparse.Namespace) -> int:
    bit_a, bit_b = _geometry(args)
    x = read_qtensor(args.input).to_tensor3()
    w = read_qtensor(args.kernel).to_tensor4()
    probe = None
    if args.naive and not args.verify:
        out = naive_conv2d(x, w)
    else:
        layer = HiKonvConv2d(w, bit_a, bit_b, in_bit=x.bitwidth, accumulate=args.accumulate, group_size=args.m)
        probe = KernelProbe()
        out = layer(x, probe=probe)
        if args.verify:
            expected = naive_conv2d(x, w)
            if out != expected:
                raise EquivalenceFailure(
                    "packed conv2d differs from the reference",
                    {"input": args.input, "kernel": args.kernel, "cfg": str(layer.cfg)},
                    expected.data.tolist(),
                    out.data.tolist(),
                )
    nbytes = write_qtensor(args.out, out)
    _report_written(args.out, nbytes, probe)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    bit_a, bit_b = _geometry(args)
    if args.config is not None:
        specs = [BenchSpec.from_dict({"bit_a": bit_a, "bit_b": bit_b, **s}) for s in load_scenarios(args.config)]
    else:
        if args.scenario == "conv1d":
            shape = (args.len, args.k)
        else:
            shape = DEFAULT_SHAPES[args.scenario] if args.shape is None else args.shape
        specs = [
            BenchSpec(
                args.scenario, shape, args.p, args.q, args.signed, args.iters, args.warmup, bit_a, bit_b, args.seed
            )
        ]
    blob = emit_csv(run_benches(specs, threads=args.threads))
    if args.out is None:
        sys.stdout.write(blob.decode("utf-8"))
    else:
        with open(args.out, "wb") as f:
            f.write(blob)
        logger.info(f"Wrote {len(specs)} records to {args.out}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    bit_a, bit_b = _geometry(args)
    report = run_selftest(
        exhaustive_bits=args.exhaustive_bits,
        random_cases=args.random_cases,
        conv2d_cases=args.conv2d_cases,
        seed=args.seed,
        threads=args.threads,
        bit_a=bit_a,
        bit_b=bit_b,
        progress=not args.no_progress,
    )
    print(report.summary())
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except EquivalenceFailure as e:
        logger.error(str(e))
        print(e.describe(), file=sys.stderr)
        return EXIT_MISMATCH
    except (HiKonvError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())
