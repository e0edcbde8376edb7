"""
KESTREL Parallel Runtime
Thread-pool width control and a linearizable float atomic add for numba kernels
"""

from contextlib import contextmanager

import numba
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

from kestrel_config import get_logger
from kestrel_errors import InvalidParameterError

logger = get_logger(__name__, 'PAR')


def max_threads():
    """Width of the numba thread pool (NUMBA_NUM_THREADS)"""
    return int(numba.config.NUMBA_NUM_THREADS)


def effective_threads(threads):
    """Clamp a requested width to the pool; warn when capped"""
    threads = int(threads)
    if threads < 1:
        raise InvalidParameterError(f"threads must be >= 1, got {threads}")
    available = max_threads()
    if threads > available:
        logger.warning(f"Requested {threads} threads, pool has {available}; capping")
        return available
    return threads


@contextmanager
def thread_scope(threads, chunk_size=None):
    """
    Run parallel regions with the given width. chunk_size=1 turns the
    parallel loop into a dynamic work queue over iterations.
    """
    width = effective_threads(threads)
    previous_width = numba.get_num_threads()
    previous_chunk = numba.get_parallel_chunksize()
    numba.set_num_threads(width)
    if chunk_size is not None:
        numba.set_parallel_chunksize(int(chunk_size))
    try:
        yield width
    finally:
        numba.set_num_threads(previous_width)
        numba.set_parallel_chunksize(previous_chunk)


@intrinsic
def atomic_add(typingctx, array, index, value):
    """
    array[index] += value as one relaxed atomic read-modify-write; returns the
    previous value. Lowered to LLVM 'atomicrmw fadd', which the backend
    expands into a compare-and-swap retry loop on targets without a native
    floating-point atomic add.
    """
    if not isinstance(array, types.Array) or array.ndim != 1:
        return None
    if not isinstance(array.dtype, types.Float):
        return None
    if not isinstance(index, types.Integer) or not isinstance(value, (types.Float, types.Integer)):
        return None

    sig = array.dtype(array, index, value)

    def codegen(context, builder, signature, args):
        aryty, idxty, valty = signature.args
        ary, idx, val = args
        arr = context.make_array(aryty)(context, builder, ary)
        idx = context.cast(builder, idx, idxty, types.intp)
        val = context.cast(builder, val, valty, aryty.dtype)
        ptr = cgutils.get_item_pointer(context, builder, aryty, arr, [idx])
        return builder.atomic_rmw('fadd', ptr, val, 'monotonic')

    return sig, codegen
