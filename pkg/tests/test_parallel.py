"""Tests for thread-pool width control and the float atomic add"""

import numba
import numpy as np
import pytest
from numba import njit, prange

from kestrel_errors import InvalidParameterError
from kestrel_parallel import atomic_add, effective_threads, max_threads, thread_scope


@njit(parallel=True)
def _hammer(out, rows, value):
    for i in prange(rows.shape[0]):
        atomic_add(out, rows[i], value)


@njit
def _previous(out, value):
    return atomic_add(out, 0, value)


def test_effective_threads_caps_at_pool():
    assert effective_threads(1) == 1
    assert effective_threads(max_threads() + 5) == max_threads()
    with pytest.raises(InvalidParameterError):
        effective_threads(0)


def test_thread_scope_restores_settings():
    before_width = numba.get_num_threads()
    before_chunk = numba.get_parallel_chunksize()
    with thread_scope(1, chunk_size=4) as width:
        assert width == 1
        assert numba.get_num_threads() == 1
        assert numba.get_parallel_chunksize() == 4
    assert numba.get_num_threads() == before_width
    assert numba.get_parallel_chunksize() == before_chunk


def test_atomic_add_returns_previous():
    out = np.array([1.5, 0.0])
    assert _previous(out, 2.0) == 1.5
    assert out[0] == 3.5


@pytest.mark.parametrize('dtype', [np.float32, np.float64])
def test_atomic_add_under_contention(dtype):
    # every update lands on one of two rows
    rows = np.arange(100000) % 2
    out = np.zeros(2, dtype=dtype)
    with thread_scope(max_threads()):
        _hammer(out, rows, 1.0)
    np.testing.assert_array_equal(out, np.array([50000, 50000], dtype=dtype))
