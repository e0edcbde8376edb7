#!/usr/bin/env python3
"""
KESTREL CP-ALS Runner
Decompose a .tns tensor, print the per-iteration fit and time breakdown,
and save lambda, the factor matrices and a JSON summary
"""

import argparse
import json
import os
import sys
from datetime import datetime

import numpy as np

# Add paths for imports
current_dir = os.path.dirname(os.path.abspath(__file__))
src_dir = os.path.join(os.path.dirname(current_dir), 'src')
sys.path.insert(0, src_dir)

from kestrel_config import load_configuration, setup_logging  # noqa: E402
from kestrel_cpals import AlsOptions, cp_als  # noqa: E402
from kestrel_errors import CapacityError, KestrelError  # noqa: E402
from kestrel_oracle import dense_fit  # noqa: E402
from kestrel_sptensor import INDEX_DTYPES, VALUE_DTYPES, read_tns  # noqa: E402


def save_results(M, trace, out_dir, source, dense_check=None):
    """weights.npy, factor_<n>.npy and summary.json under out_dir"""
    os.makedirs(out_dir, exist_ok=True)
    np.save(os.path.join(out_dir, 'weights.npy'), M.weights)
    for n, A in enumerate(M.factors):
        np.save(os.path.join(out_dir, f'factor_{n}.npy'), A)

    breakdown = trace.to_frame()
    summary = {
        'input': source,
        'completed': datetime.now().isoformat(),
        'dims': list(M.dims),
        'rank': M.rank,
        'seed': trace.seed,
        'iterations': trace.iterations,
        'final_fit': trace.fits[-1],
        'fits': trace.fits,
        'total_seconds': trace.total_seconds,
        'mttkrp_seconds': trace.mttkrp_total,
        'sort_seconds': trace.sort_seconds,
        'dense_fit': dense_check,
        'breakdown_seconds': {
            column: float(breakdown[column].sum())
            for column in ('mttkrp', 'gram', 'solve', 'normalize', 'fit_eval')
        },
    }
    path = os.path.join(out_dir, 'summary.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2)
    return summary


def main(argv=None):
    parser = argparse.ArgumentParser(description='Run CP-ALS on a .tns tensor')
    parser.add_argument('input', help='FROSTT .tns tensor file')
    parser.add_argument('--config', help='Configuration file path')
    parser.add_argument('--rank', type=int)
    parser.add_argument('--iters', type=int)
    parser.add_argument('--tol', type=float)
    parser.add_argument('--regularization', type=float)
    parser.add_argument('--variant', choices=['atomic', 'blocked', 'perm', 'dup'], default='blocked')
    parser.add_argument('--threads', type=int, default=1)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--out-dir', default='data/processed/cpals')
    parser.add_argument('--dense-check', action='store_true',
                        help='Recompute the final fit from a dense residual (bounded by oracle.dense_cap)')
    args = parser.parse_args(argv)

    config = load_configuration(args.config)
    logger = setup_logging(config)

    print("🚀 KESTREL CP-ALS Starting...")
    print("=" * 50)
    try:
        precision = config['precision']
        X = read_tns(args.input,
                     index_dtype=INDEX_DTYPES[precision['ordinal_bytes']],
                     value_dtype=VALUE_DTYPES[precision['float_bytes']])
        opts = AlsOptions.from_config(
            config, rank=args.rank, max_iters=args.iters, fit_tolerance=args.tol,
            regularization=args.regularization, variant=args.variant,
            threads=args.threads, seed=args.seed)
        M, trace = cp_als(X, opts)
    except (KestrelError, OSError) as e:
        logger.error(f"CP-ALS failed: {e}")
        print(f"❌ CP-ALS failed: {e}", file=sys.stderr)
        return 1

    print(f"\n📈 Fit per iteration ({trace.iterations} iterations):")
    breakdown = trace.to_frame()
    print(breakdown.to_string(index=False, float_format=lambda v: f"{v:.6f}"))

    dense_check = None
    if args.dense_check:
        cap = config['oracle']['dense_cap']
        try:
            dense_check = dense_fit(X, M, cap)
            print(f"\n🔎 Dense fit {dense_check:.6f} (sparse fit {trace.fits[-1]:.6f})")
        except CapacityError as e:
            logger.warning(f"Dense check skipped: {e}")

    summary = save_results(M, trace, args.out_dir, args.input, dense_check)
    print("\n⏱️  Time breakdown (seconds):")
    for step, seconds in summary['breakdown_seconds'].items():
        print(f"   • {step}: {seconds:.4f}")
    if trace.sort_seconds is not None:
        print(f"   • sort: {trace.sort_seconds:.4f}")
    print(f"\n✅ Final fit {summary['final_fit']:.6f}; results saved to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
