#!/usr/bin/env python3
"""
🪶 KESTREL - Kernels for Efficient Sparse Tensor Rank-decomposition Exploration and Layouts
Benchmark entry point: MTTKRP variants, thread scaling, bandwidth vs peak, sort cost
"""

import argparse
import logging
import os
import sys
import traceback

from kestrel_bench import BenchConfig, emit_report, run_benchmark
from kestrel_config import load_configuration, setup_logging
from kestrel_errors import BenchConfigError, KestrelError
from kestrel_visualizer import KestrelVisualizer


def parse_dims(text):
    """'300x400x500' -> (300, 400, 500)"""
    try:
        dims = tuple(int(part) for part in text.lower().split('x'))
    except ValueError:
        raise BenchConfigError(f"--dims expects I1xI2x..., got {text!r}") from None
    if not dims or any(n < 1 for n in dims):
        raise BenchConfigError(f"--dims entries must be positive, got {text!r}")
    return dims


def parse_rank_sweep(text):
    """'START:STOP:STEP' with STOP included -> list of ranks"""
    try:
        start, stop, step = (int(part) for part in text.split(':'))
    except ValueError:
        raise BenchConfigError(f"--rank-sweep expects START:STOP:STEP, got {text!r}") from None
    if start < 1 or step < 1 or stop < start:
        raise BenchConfigError(f"--rank-sweep needs 1 <= START <= STOP and STEP >= 1, got {text!r}")
    return list(range(start, stop + 1, step))


def build_parser():
    parser = argparse.ArgumentParser(
        prog='kestrel',
        description='KESTREL sparse MTTKRP / CP-ALS benchmark')
    parser.add_argument('--config', help='Configuration file path')

    source = parser.add_mutually_exclusive_group()
    source.add_argument('--input', help='FROSTT .tns tensor file')
    source.add_argument('--dims', help='Synthetic tensor dimensions, e.g. 300x400x500')
    parser.add_argument('--nnz', type=int, default=100000, help='Synthetic nonzero count')
    parser.add_argument('--seed', type=int, help='Synthetic tensor and factor seed')

    parser.add_argument('--rank', type=int, help='Number of CP components R')
    parser.add_argument('--rank-sweep', help='Sweep R over START:STOP:STEP (implies --mttkrp-only)')
    parser.add_argument('--iters', type=int, help='Iterations per measurement')
    parser.add_argument('--variant', action='append', choices=['atomic', 'blocked', 'perm', 'dup'],
                        help='MTTKRP variant (repeatable)')
    parser.add_argument('--threads', action='append', type=int, help='Thread count (repeatable)')
    parser.add_argument('--mttkrp-only', action='store_true', help='Time MTTKRP without the ALS solves')
    parser.add_argument('--peak-gbps', type=float, help='Peak bandwidth in GB/s; skips the STREAM measurement')
    parser.add_argument('--float-bytes', type=int, choices=[4, 8], help='Value and factor width')
    parser.add_argument('--ordinal-bytes', type=int, choices=[4, 8], help='Coordinate width')
    parser.add_argument('--out', help='Report path')
    parser.add_argument('--format', choices=['csv', 'json'], help='Report format')
    parser.add_argument('--plot-dir', help='Write charts for the report into this directory')
    parser.add_argument('--no-progress', action='store_true', help='Hide the progress bar')
    return parser


class KestrelBenchmarkSystem:
    """
    Benchmark run: configuration, logging, directories and the report
    """

    def __init__(self, config_file=None):
        self.config = load_configuration(config_file)
        self.logger = setup_logging(self.config)
        self.logger.info("🪶 KESTREL benchmark system initialized")

    def create_directory_structure(self):
        for dir_path in self.config['directories'].values():
            os.makedirs(dir_path, exist_ok=True)
            self.logger.debug(f"Directory ensured: {dir_path}")

    def bench_config(self, args):
        """CLI flags over the config file over the built-in defaults"""
        overrides = {
            'input': args.input,
            'nnz': args.nnz,
            'seed': args.seed,
            'rank': args.rank,
            'iters': args.iters,
            'variants': args.variant,
            'threads': args.threads,
            'peak_gbps': args.peak_gbps,
            'float_bytes': args.float_bytes,
            'ordinal_bytes': args.ordinal_bytes,
            'out': args.out,
            'format': args.format,
        }
        if args.dims:
            overrides['dims'] = parse_dims(args.dims)
        if args.rank_sweep:
            overrides['ranks'] = parse_rank_sweep(args.rank_sweep)
        if args.mttkrp_only:
            overrides['mttkrp_only'] = True
        if args.no_progress:
            overrides['progress'] = False
        config = BenchConfig.from_config(self.config, **overrides)
        if config.out is None:
            reports = self.config['directories']['reports']
            config.out = os.path.join(reports, f"kestrel_bench.{config.format}")
        elif args.out is None:
            config.out = f"{os.path.splitext(config.out)[0]}.{config.format}"
        return config

    def run(self, args):
        config = self.bench_config(args)
        report = run_benchmark(config)
        emit_report(report, config.format, config.out)
        if args.plot_dir:
            KestrelVisualizer(args.plot_dir).generate_all(report)
        return report, config


def main(argv=None):
    """Main KESTREL benchmark entry point"""
    args = build_parser().parse_args(argv)

    try:
        print("🪶" + "=" * 70 + "🪶")
        print("   KESTREL - Sparse Tensor CP Decomposition Benchmarks")
        print("   MTTKRP Variants, Thread Scaling & Bandwidth Efficiency")
        print("🪶" + "=" * 70 + "🪶")
        print()

        kestrel = KestrelBenchmarkSystem(config_file=args.config)
        kestrel.create_directory_structure()
        report, config = kestrel.run(args)

        print(f"\n✅ {len(report)} measurements written to {config.out}")
        if not report.rows.empty:
            print(report.totals().to_string(index=False))
        return 0

    except (KestrelError, OSError) as e:
        logging.getLogger("kestrel_main").error(f"{type(e).__name__}: {e}")
        print(f"❌ KESTREL error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"❌ KESTREL unexpected error: {e}", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
