"""
KESTREL Kruskal Tensor Module
Weighted sum of rank-one tensors: construction, normalization, norms and fit
"""

import math

import numpy as np
from numba import njit, prange

from kestrel_config import get_logger
from kestrel_errors import (
    CoordinateRangeError,
    DimensionMismatchError,
    InvalidParameterError,
    ZeroNormError,
)
from kestrel_parallel import thread_scope
from kestrel_sptensor import frobenius_norm

logger = get_logger(__name__, 'KT')

# Nonzeros per partial sum in inner_product; fixed so the reduction order does not depend on threads
INNER_PRODUCT_BLOCK = 4096


def as_factor_matrix(A, rank=None, rows=None):
    """Validate a dense row-major I_n x R factor matrix"""
    A = np.ascontiguousarray(A)
    if A.ndim != 2:
        raise DimensionMismatchError(f"factor matrix must be 2-D, got shape {A.shape}")
    if not np.issubdtype(A.dtype, np.floating):
        A = A.astype(np.float64)
    if rank is not None and A.shape[1] != rank:
        raise DimensionMismatchError(f"factor matrix has {A.shape[1]} columns, expected {rank}")
    if rows is not None and A.shape[0] != rows:
        raise DimensionMismatchError(f"factor matrix has {A.shape[0]} rows, expected {rows}")
    if not np.isfinite(A).all():
        raise InvalidParameterError("factor matrix entries must be finite")
    return A


class KTensor:
    """
    Kruskal tensor {lambda; A^(1), ..., A^(d)}. metadata carries flags
    produced along the way (e.g. zero columns found by normalize_columns).
    """

    def __init__(self, weights, factors, metadata=None):
        weights = np.ascontiguousarray(weights)
        if weights.ndim != 1 or weights.size < 1:
            raise DimensionMismatchError(f"weights must be a non-empty vector, got shape {weights.shape}")
        if not np.isfinite(weights).all():
            raise InvalidParameterError("weights must be finite")
        if not factors:
            raise DimensionMismatchError("a K-tensor needs at least one factor matrix")
        rank = weights.shape[0]
        self.factors = [as_factor_matrix(A, rank=rank) for A in factors]
        self.weights = weights.astype(self.factors[0].dtype, copy=False)
        self.metadata = dict(metadata or {})

    @property
    def ndims(self):
        return len(self.factors)

    @property
    def rank(self):
        return int(self.weights.shape[0])

    @property
    def dims(self):
        return tuple(A.shape[0] for A in self.factors)

    @property
    def dtype(self):
        return self.weights.dtype

    def copy(self):
        return KTensor(self.weights.copy(), [A.copy() for A in self.factors], self.metadata)

    def with_unit_weights(self):
        """Same factors, lambda reset to ones"""
        return KTensor(np.ones_like(self.weights), self.factors, self.metadata)

    def __repr__(self):
        shape = ' x '.join(str(n) for n in self.dims)
        return f"KTensor({shape}, R={self.rank})"


def check_compatible(X, M):
    """Raise unless the sparse tensor and the K-tensor share dimensions"""
    if tuple(X.dims) != tuple(M.dims):
        raise DimensionMismatchError(
            f"tensor dims {list(X.dims)} do not match K-tensor dims {list(M.dims)}")


def random_ktensor(dims, R, seed, dtype=np.float64):
    """Uniform [0,1) factor entries, unit weights; deterministic per seed"""
    R = int(R)
    if R < 1:
        raise InvalidParameterError(f"rank must be >= 1, got {R}")
    rng = np.random.default_rng(seed)
    factors = [rng.random((int(n), R)).astype(dtype, copy=False) for n in dims]
    return KTensor(np.ones(R, dtype=dtype), factors)


def entry(M, index):
    """Model value sum_j lambda_j prod_m a^(m)(index_m, j)"""
    index = [int(i) for i in index]
    if len(index) != M.ndims:
        raise DimensionMismatchError(f"index has {len(index)} entries, K-tensor has {M.ndims} modes")
    for m, (i, n) in enumerate(zip(index, M.dims)):
        if not 0 <= i < n:
            raise CoordinateRangeError(f"index {i} outside [0, {n}) in mode {m}")
    terms = M.weights.astype(np.float64)
    for A, i in zip(M.factors, index):
        terms = terms * A[i, :]
    return float(terms.sum())


def normalize_columns(M):
    """
    Scale every factor column to unit 2-norm and fold the norms into lambda.
    A zero column sets lambda_j = 0 and becomes e_1; such columns are listed
    in metadata['zero_columns'] as (mode, column) pairs.
    """
    weights = M.weights.astype(np.float64)
    factors = []
    zero_columns = []
    for n, A in enumerate(M.factors):
        norms = np.linalg.norm(A, axis=0)
        zero = norms == 0
        safe = np.where(zero, 1.0, norms)
        B = A / safe
        weights = weights * norms
        for j in np.flatnonzero(zero):
            B[:, j] = 0
            B[0, j] = 1
            zero_columns.append((n, int(j)))
        factors.append(B.astype(A.dtype, copy=False))
    for _, j in zero_columns:
        weights[j] = 0.0
    if zero_columns:
        logger.warning(f"normalize_columns found {len(zero_columns)} zero column(s): {zero_columns}")
    metadata = dict(M.metadata)
    metadata['zero_columns'] = zero_columns
    return KTensor(weights.astype(M.dtype), factors, metadata)


def gram(A):
    """A^T A, exactly symmetric"""
    A = np.asarray(A)
    G = A.T @ A
    upper = np.triu(G)
    return upper + np.triu(G, 1).T


def norm_squared(M):
    """||M||^2 = lambda^T (Hadamard product of all Gram matrices) lambda"""
    hadamard = np.ones((M.rank, M.rank))
    for A in M.factors:
        hadamard *= gram(A)
    w = M.weights.astype(np.float64)
    return float(w @ hadamard @ w)


@njit(parallel=True, cache=True)
def _inner_product_partials(coords, values, weights, factors, block):
    P = values.shape[0]
    d = coords.shape[1]
    R = weights.shape[0]
    nblocks = (P + block - 1) // block
    partials = np.zeros(nblocks)
    for b in prange(nblocks):
        start = b * block
        stop = min(start + block, P)
        acc = 0.0
        for i in range(start, stop):
            s = 0.0
            for j in range(R):
                t = weights[j]
                for m in range(d):
                    t *= factors[m][coords[i, m], j]
                s += t
            acc += values[i] * s
        partials[b] = acc
    return partials


def inner_product(X, M, threads=1):
    """<X, M> = sum_i x_i * entry(M, coords(i)); blocked, thread-count independent"""
    check_compatible(X, M)
    if X.nnz == 0:
        return 0.0
    dtype = M.dtype
    with thread_scope(threads):
        partials = _inner_product_partials(
            X.coords, X.values.astype(dtype, copy=False), M.weights,
            tuple(M.factors), INNER_PRODUCT_BLOCK)
    return float(np.sum(partials))


def fit(X, M, threads=1):
    """1 - ||X - M|| / ||X||, with the squared residual clamped at zero"""
    check_compatible(X, M)
    norm_x = frobenius_norm(X)
    if norm_x == 0:
        raise ZeroNormError("fit is undefined for a zero-norm tensor")
    residual_sq = norm_x ** 2 + norm_squared(M) - 2.0 * inner_product(X, M, threads)
    residual_sq = max(0.0, residual_sq)
    return 1.0 - math.sqrt(residual_sq) / norm_x
