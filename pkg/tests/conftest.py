"""Shared fixtures and markers for the KESTREL test suite"""

import os
import sys

import numpy as np
import pytest

TESTS_DIR = os.path.dirname(os.path.abspath(__file__))
ROOT_DIR = os.path.dirname(TESTS_DIR)
sys.path.insert(0, os.path.join(ROOT_DIR, 'src'))
sys.path.insert(0, os.path.join(ROOT_DIR, 'scripts'))

from kestrel_ktensor import KTensor, random_ktensor  # noqa: E402
from kestrel_sptensor import from_coo, random_sparse  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: acceptance-scale runs')
    config.addinivalue_line('markers', 'perf: hardware-dependent timing gates')


def physical_cores():
    return os.cpu_count() or 1


def require_cores(n):
    """Skip unless the machine and the numba pool both have n workers"""
    from kestrel_parallel import max_threads
    if physical_cores() < n or max_threads() < n:
        pytest.skip(f"needs {n} cores, have {physical_cores()} (pool {max_threads()})")


def dense_as_sparse(M):
    """Every entry of the K-tensor M stored as a nonzero"""
    from kestrel_oracle import reconstruct
    dense = reconstruct(M).array
    coords = np.argwhere(np.ones(dense.shape, dtype=bool))
    return from_coo(dense.shape, coords, dense.reshape(-1))


def assert_close(actual, expected, rtol=1e-10, atol=1e-12):
    np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)


@pytest.fixture
def small_tensor():
    return random_sparse((6, 7, 8), 64, seed=7)


@pytest.fixture
def small_ktensor():
    return random_ktensor((6, 7, 8), 5, seed=11)


@pytest.fixture
def single_nonzero():
    X = from_coo((3, 4, 5), [(0, 1, 2)], [2.0])
    M = KTensor(np.ones(1), [np.ones((n, 1)) for n in X.dims])
    return X, M
