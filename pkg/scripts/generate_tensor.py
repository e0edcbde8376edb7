#!/usr/bin/env python3
"""
KESTREL Tensor Generator
Write synthetic FROSTT .tns tensors: uniform random coordinates, or the
short-mode tensor (mode 1 of length 2) that concentrates MTTKRP writes on two rows
"""

import argparse
import os
import sys

# Add paths for imports
current_dir = os.path.dirname(os.path.abspath(__file__))
src_dir = os.path.join(os.path.dirname(current_dir), 'src')
sys.path.insert(0, src_dir)

from kestrel_config import load_configuration  # noqa: E402
from kestrel_errors import KestrelError  # noqa: E402
from kestrel_sptensor import INDEX_DTYPES, VALUE_DTYPES, random_sparse, write_tns  # noqa: E402

SHORT_MODE_DIMS = (1000, 2, 1000)


def generate(kind, dims, nnz, seed, float_bytes=8, ordinal_bytes=8):
    """Seeded synthetic tensor of the requested kind"""
    if kind == 'short-mode':
        dims = SHORT_MODE_DIMS
    return random_sparse(dims, nnz, seed,
                         index_dtype=INDEX_DTYPES[ordinal_bytes],
                         value_dtype=VALUE_DTYPES[float_bytes])


def main(argv=None):
    parser = argparse.ArgumentParser(description='Generate a synthetic .tns tensor')
    parser.add_argument('output', help='Destination .tns path')
    parser.add_argument('--kind', choices=['uniform', 'short-mode'], default='uniform')
    parser.add_argument('--dims', default='300x400x500', help='I1xI2x... (uniform kind)')
    parser.add_argument('--nnz', type=int, default=100000)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--config', help='Configuration file path')
    args = parser.parse_args(argv)

    config = load_configuration(args.config)
    seed = args.seed if args.seed is not None else config['als']['seed']
    precision = config['precision']

    try:
        dims = tuple(int(n) for n in args.dims.lower().split('x'))
        X = generate(args.kind, dims, args.nnz, seed,
                     precision['float_bytes'], precision['ordinal_bytes'])
        out_dir = os.path.dirname(args.output)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        write_tns(X, args.output)
    except (KestrelError, ValueError, KeyError, OSError) as e:
        print(f"❌ Tensor generation failed: {e}", file=sys.stderr)
        return 1

    print(f"✅ {X!r} written to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
