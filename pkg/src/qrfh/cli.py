"""Command-line front end: simulate, analyze-cr, bench."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import _kernels
from .codec import compression_ratio
from .config import SimConfig, full_scale, parse_config
from .errors import QrfhError
from .harness import (CSV_COLUMNS, benchmark_compressors, benchmark_kernels,
                      run_sweep, sweep_bit_report)


def _load_config(args) -> SimConfig:
    full = bool(getattr(args, "full_scale", False))
    if args.config:
        cfg = parse_config(args.config, full=full)
    else:
        cfg = full_scale(SimConfig()) if full else SimConfig()
    overrides = {}
    for key in ("seed", "trials", "compressor"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _print_table(rows, columns):
    widths = [max(len(col), *(len(str(r[col])) for r in rows)) for col in columns]
    print("  ".join(col.ljust(w) for col, w in zip(columns, widths)))
    for row in rows:
        print("  ".join(str(row[col]).ljust(w) for col, w in zip(columns, widths)))


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    rows = run_sweep(cfg, out_path=args.out, parallel=args.parallel)
    shown = [{col: f"{row[col]:.3g}" if isinstance(row[col], float) else row[col]
              for col in CSV_COLUMNS} for row in rows]
    _print_table(shown, CSV_COLUMNS)
    if args.out:
        print(f"wrote {args.out}")
    return 0


def _cmd_analyze_cr(args) -> int:
    cfg = _load_config(args)
    symbol_len = cfg.n_fft + cfg.cp_len
    l_value = cfg.resolved_l_u()
    report = compression_ratio(symbol_len, cfg.n_r, 2 * cfg.quantizer_bits,
                               [(a.n_subcarriers, l_value) for a in cfg.allocations()])
    print(f"symbol: n={symbol_len} samples, n_r={cfg.n_r} antennas, "
          f"b_q={2 * cfg.quantizer_bits} bits/sample")
    print(f"users: {cfg.users}, rb_allocation={list(cfg.rb_allocation)}, l_u={l_value}")
    print(report)
    if cfg.compressor == "svd-baseline":
        svd_report = sweep_bit_report(cfg)
        print(f"svd-baseline at matched budget: {svd_report}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    print(f"kernel backend: {_kernels.BACKEND} (numba available: {_kernels.HAVE_NUMBA})")
    print("\ncompression timing (median of "
          f"{args.repeats}, scale n_r={cfg.n_r}, n_fft={cfg.n_fft}):")
    rows = benchmark_compressors(cfg, repeats=args.repeats)
    shown = [{**r, "median_us": f"{r['median_us']:.1f}"} for r in rows]
    _print_table(shown, ("algorithm", "l_u", "median_us"))
    print("\nkernel backends (median of 5):")
    rows = benchmark_kernels()
    shown = [{**r, "median_us": f"{r['median_us']:.1f}"} for r in rows]
    _print_table(shown, ("kernel", "backend", "median_us"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrfh",
        description="Uplink fronthaul compression (pivoted QR) link-level simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo BER sweep")
    sim.add_argument("--config", help="flat key=value config file")
    sim.add_argument("--out", help="CSV output path")
    sim.add_argument("--seed", type=int, help="override the master seed")
    sim.add_argument("--trials", type=int, help="override trials per SNR point")
    sim.add_argument("--compressor", choices=("qr", "svd-baseline", "none"),
                     help="override the fronthaul compressor")
    sim.add_argument("--parallel", type=int, default=1,
                     help="worker processes (results are worker-count invariant)")
    sim.add_argument("--full-scale", action="store_true",
                     help="use the wideband 256-antenna dimensions")
    sim.set_defaults(func=_cmd_simulate)

    cr = sub.add_parser("analyze-cr", help="print the compression-ratio budget")
    cr.add_argument("--config", help="flat key=value config file")
    cr.add_argument("--full-scale", action="store_true",
                    help="use the wideband 256-antenna dimensions")
    cr.set_defaults(func=_cmd_analyze_cr)

    bench = sub.add_parser("bench", help="time compressors and kernel backends")
    bench.add_argument("--config", help="flat key=value config file")
    bench.add_argument("--full-scale", action="store_true",
                       help="use the wideband 256-antenna dimensions")
    bench.add_argument("--repeats", type=int, default=10)
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QrfhError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
