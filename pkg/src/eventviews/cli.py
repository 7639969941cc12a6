"""Command-line entry point: ``eventviews <command> ...``.

Exit codes: 0 success, 1 usage/configuration, 2 parse or I/O failure,
3 domain violation (bad event data, degenerate stream, failed check).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dtw, formats
from .errors import ConfigError, ContractError, DomainError, FormatError
from .events import ViewAxis
from .fusion import (
    AttentionHead,
    SoftmaxCrossEntropy,
    ToyBranch,
    attention_forward,
    gradient_check,
    pipeline_forward,
)
from .synthetic import DAVIS346, moving_bar, synthetic_stream
from .tism import (
    DEFAULT_T_BINS,
    EncoderConfig,
    check_invariance,
    compact_spec_set,
    encode_view,
    invariant_spec_set,
    parse_specs,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected AxB, got {text!r}") from None
    if a < 1 or b < 1:
        raise argparse.ArgumentTypeError(f"sizes must be positive, got {text!r}")
    return a, b


def _int_list(text: str) -> list[int]:
    items = [v for v in text.replace(" ", "").split(",") if v]
    try:
        return [int(v) for v in items]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b, got {text!r}") from None
    return a, b


def _load(path, sensor):
    width, height = sensor if sensor else (None, None)
    return formats.read_events(path, width, height)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


# -- commands -----------------------------------------------------------------

def cmd_convert(args) -> int:
    view = ViewAxis.parse(args.view)
    config = EncoderConfig(view, parse_specs(args.specs), args.t_bins)
    inputs = [Path(p) for p in args.inputs]
    out = Path(args.output)
    if len(inputs) > 1:
        out.mkdir(parents=True, exist_ok=True)
        targets = [out / (p.stem + ".dmp") for p in inputs]
    else:
        targets = [out]

    def one(src, dst):
        dense = encode_view(_load(src, args.sensor), config)
        if args.resize:
            dense = formats.resize_nearest(dense, *args.resize)
        formats.write_map(dense, dst)
        return {"input": str(src), "output": str(dst), "shape": [dense.channels, dense.rows, dense.cols]}

    with ThreadPoolExecutor(max_workers=args.threads or 1) as pool:
        results = list(pool.map(one, inputs, targets))
    lines = [f"{r['input']} -> {r['output']} {'x'.join(map(str, r['shape']))}" for r in results]
    _emit(args, {"command": "convert", "results": results}, "\n".join(lines))
    return EXIT_OK


def cmd_augment(args) -> int:
    stream = _load(args.input, args.sensor)
    families = [dtw.WarpFamily(f) for f in args.families.split(",")] if args.families else dtw.ALL_FAMILIES
    plan = dtw.sample_plan(stream, args.l, args.mag_range, args.seed, families)
    warped = dtw.apply_warp(stream, plan, rescale=args.rescale)
    formats.write_events(warped, args.output)
    if args.plan_out:
        formats.write_plan(plan, args.plan_out)
    payload = {
        "command": "augment",
        "plan": plan.to_dict(),
        "events_in": len(stream),
        "events_out": len(warped),
        "output": str(args.output),
    }
    _emit(args, payload, f"{plan.summary()}\nevents: {len(stream)} -> {len(warped)}")
    return EXIT_OK


def cmd_verify_invariance(args) -> int:
    view = ViewAxis.parse(args.view)
    if view is ViewAxis.HW:
        raise UsageError("verify-invariance shifts along x or y; use --view th or tw")
    if not args.deltas:
        raise UsageError("--deltas needs at least one shift")
    stream = _load(args.input, args.sensor)
    claimed = set(invariant_spec_set())
    rows = []
    for spec in parse_specs(args.specs):
        report = check_invariance(stream, view, spec, args.deltas, args.t_bins)
        expected = spec in claimed
        rows.append({
            "spec": str(spec),
            "claimed_invariant": expected,
            "invariant": report.invariant,
            "max_abs_deviation": report.max_abs_deviation,
            "tested_deltas": list(report.tested_deltas),
            "skipped_deltas": list(report.skipped_deltas),
            "ok": report.invariant == expected,
        })
    ok = all(r["ok"] for r in rows)
    lines = [f"{'spec':<20} {'claimed':>7} {'TI':>3} {'max_dev':>12} {'tested':>6} {'skipped':>7}"]
    for r in rows:
        lines.append(
            f"{r['spec']:<20} {'TI' if r['claimed_invariant'] else '-':>7} "
            f"{'✓' if r['invariant'] else '✗':>3} {r['max_abs_deviation']:>12.4g} "
            f"{len(r['tested_deltas']):>6} {len(r['skipped_deltas']):>7}"
        )
    lines.append("verdict: " + ("all specs behave as claimed" if ok else "MISMATCH"))
    _emit(args, {"command": "verify-invariance", "view": view.name, "results": rows, "ok": ok}, "\n".join(lines))
    return EXIT_OK if ok else EXIT_DOMAIN


def cmd_bench(args) -> int:
    if args.input:
        stream = _load(args.input, args.sensor)
    else:
        width, height = args.sensor or DAVIS346
        stream = synthetic_stream(args.synthetic, width, height, seed=args.seed)
    config = EncoderConfig(ViewAxis.parse(args.view), parse_specs(args.specs), args.t_bins)
    encode_view(stream, config)  # warm-up
    times = []
    for _ in range(args.repeat):
        start = time.perf_counter()
        dense = encode_view(stream, config)
        times.append(time.perf_counter() - start)
    median = float(np.median(times))
    payload = {
        "command": "bench",
        "events": len(stream),
        "shape": [dense.channels, dense.rows, dense.cols],
        "repeat": args.repeat,
        "median_ms": median * 1e3,
        "events_per_second": len(stream) / median if median > 0 else None,
    }
    lines = [
        f"events:     {len(stream)}",
        f"map:        {dense.channels}x{dense.rows}x{dense.cols} ({args.specs}, view {config.view.name})",
        f"median:     {median * 1e3:.3f} ms",
    ]
    if args.repeat > 1:
        p95 = float(np.percentile(times, 95))
        payload["p95_ms"] = p95 * 1e3
        lines.append(f"p95:        {p95 * 1e3:.3f} ms")
    if payload["events_per_second"]:
        lines.append(f"throughput: {payload['events_per_second'] / 1e6:.1f} M events/s")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_fuse_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    stream = moving_bar(seed=args.seed)
    configs = (EncoderConfig.compact(ViewAxis.TH, args.t_bins), EncoderConfig.compact(ViewAxis.TW, args.t_bins))
    channels = len(compact_spec_set())
    branch_th = ToyBranch.random(channels, args.dim, args.classes, rng, ViewAxis.TH)
    branch_tw = ToyBranch.random(channels, args.dim, args.classes, rng, ViewAxis.TW)
    head = AttentionHead.random(args.dim, args.classes, args.heads, rng, residual_norm=args.residual_norm)

    fused = pipeline_forward(stream, branch_th, branch_tw, head, configs)
    s_th, l_th = branch_th(encode_view(stream, configs[0]))
    s_tw, l_tw = branch_tw(encode_view(stream, configs[1]))
    weights = attention_forward(head, s_th, s_tw)
    label = int(rng.integers(args.classes))
    report = gradient_check(head, s_th, s_tw, l_th, l_tw, SoftmaxCrossEntropy(label))

    fmt = lambda v: "[" + ", ".join(f"{x:+.6f}" for x in v) + "]"  # noqa: E731
    lines = [
        f"stream:         {len(stream)} events",
        f"logits th:      {fmt(l_th.values)}",
        f"logits tw:      {fmt(l_tw.values)}",
        f"weights th:     {fmt(weights.w_th)}",
        f"weights tw:     {fmt(weights.w_tw)}",
        f"weight sums:    {fmt(weights.w_th + weights.w_tw)}",
        f"fused logits:   {fmt(fused.values)}",
        f"grad check:     max_rel_error={report.max_rel_error:.3e} (worst {report.worst_param}), "
        f"inputs={report.max_rel_error_inputs:.3e}",
    ]
    payload = {
        "command": "fuse-demo",
        "logits_th": l_th.values.tolist(),
        "logits_tw": l_tw.values.tolist(),
        "w_th": weights.w_th.tolist(),
        "w_tw": weights.w_tw.tolist(),
        "fused": fused.values.tolist(),
        "max_rel_error": report.max_rel_error,
        "max_rel_error_inputs": report.max_rel_error_inputs,
    }
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eventviews", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, sensor=True):
        p.add_argument("--json", action="store_true", help="print a JSON document instead of text")
        if sensor:
            p.add_argument("--sensor", type=_size, metavar="WxH", help="sensor size for CSV input (default: inferred)")

    p = sub.add_parser("convert", help="encode event files into dense view maps")
    p.add_argument("inputs", nargs="+", metavar="INPUT")
    p.add_argument("-o", "--output", required=True, help="output file, or directory for several inputs")
    p.add_argument("--view", default="th", choices=["th", "tw", "hw"])
    p.add_argument("--specs", default="compact", help="compact | invariant | comma list like binned2/c/sum")
    p.add_argument("--t-bins", type=int, default=DEFAULT_T_BINS)
    p.add_argument("--resize", type=_size, metavar="UxV", help="nearest-neighbour resample to U rows x V cols")
    p.add_argument("--threads", type=int, default=1, help="files converted in parallel")
    common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", help="apply a random temporal warp to an event file")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--l", type=int, default=dtw.DEFAULT_INTERVALS, help="number of warped intervals")
    p.add_argument("--mag-range", type=_float_pair, default=dtw.DEFAULT_MAGNITUDE_RANGE, metavar="A,B")
    p.add_argument("--families", help="comma list from identity,linear,power,exponential,cosine")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rescale", action="store_true", help="restore the original total duration")
    p.add_argument("--plan-out", help="also write the sampled plan as JSON")
    common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("verify-invariance", help="check encoders against spatial shifts")
    p.add_argument("input")
    p.add_argument("--view", default="th", choices=["th", "tw"])
    p.add_argument("--deltas", type=_int_list, default=[-10, 10, -20, 20], metavar="D1,D2,...",
                   help="shifts in pixels; write negatives as --deltas=-5,5")
    p.add_argument("--specs", default="compact")
    p.add_argument("--t-bins", type=int, default=DEFAULT_T_BINS)
    common(p)
    p.set_defaults(func=cmd_verify_invariance)

    p = sub.add_parser("bench", help="time encode_view")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("input", nargs="?")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N uniform random events")
    p.add_argument("--view", default="th", choices=["th", "tw", "hw"])
    p.add_argument("--specs", default="compact")
    p.add_argument("--t-bins", type=int, default=DEFAULT_T_BINS)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fuse-demo", help="run the fusion pipeline on a synthetic stream")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--t-bins", type=int, default=32)
    p.add_argument("--residual-norm", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    common(p, sensor=False)
    p.set_defaults(func=cmd_fuse_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("t_bins", "repeat", "threads", "l", "synthetic", "dim", "classes", "heads"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            parser.error(f"--{name.replace('_', '-')} must be positive")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ContractError) as exc:
        print(f"eventviews: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"eventviews: {exc}", file=sys.stderr)
        return EXIT_IO
    except DomainError as exc:
        print(f"eventviews: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
