"""
KESTREL Sparse Tensor Module
Coordinate (COO) storage, FROSTT .tns I/O, synthetic generators and per-mode permutations
"""

import io
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
from numba import njit

from kestrel_config import get_logger
from kestrel_errors import (
    CapacityError,
    CoordinateRangeError,
    DimensionMismatchError,
    DuplicateCoordinateError,
    InvalidParameterError,
    TensorFormatError,
)

logger = get_logger(__name__, 'SPT')

INDEX_DTYPES = {4: np.int32, 8: np.int64}
VALUE_DTYPES = {4: np.float32, 8: np.float64}
DEFAULT_INDEX_DTYPE = np.int64
DEFAULT_VALUE_DTYPE = np.float64

DUPLICATE_POLICIES = ('merge-sum', 'error')

# Linear keys are used for duplicate detection while the index space fits
_LINEAR_KEY_LIMIT = 2 ** 62

_DIMS_HEADER = re.compile(r'^#\s*dims\s*:\s*(.*)$', re.IGNORECASE)


class SparseTensor:
    """
    COO sparse tensor: dims (I_1..I_d), a P x d row-major coordinate table
    (0-based) and a P-vector of values. Immutable once built; use from_coo,
    read_tns or random_sparse to construct a validated instance.
    """

    def __init__(self, dims, coords, values):
        self.dims = tuple(int(n) for n in dims)
        self.coords = np.ascontiguousarray(coords)
        self.values = np.ascontiguousarray(values)
        self.coords.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def ndims(self):
        return len(self.dims)

    @property
    def nnz(self):
        return int(self.values.shape[0])

    @property
    def index_dtype(self):
        return self.coords.dtype

    @property
    def value_dtype(self):
        return self.values.dtype

    def nonzeros(self):
        """Multiset view of the nonzeros as {coordinate tuple: value}"""
        return {tuple(int(c) for c in row): float(v) for row, v in zip(self.coords, self.values)}

    def __repr__(self):
        shape = ' x '.join(str(n) for n in self.dims)
        return f"SparseTensor({shape}, nnz={self.nnz}, dtype={self.value_dtype})"


class PermutationSet:
    """
    One permutation of {0..P-1} per mode; perms[n][i] is the nonzero visited
    i-th when traversing in increasing mode-n index (stable within ties).
    """

    def __init__(self, perms):
        self.perms = tuple(np.ascontiguousarray(p) for p in perms)
        for p in self.perms:
            p.setflags(write=False)

    @property
    def ndims(self):
        return len(self.perms)

    @property
    def nnz(self):
        return int(self.perms[0].shape[0]) if self.perms else 0

    def __getitem__(self, n):
        return self.perms[n]

    def __len__(self):
        return len(self.perms)


def _capacity(dims):
    return math.prod(int(n) for n in dims)


def _group_duplicates(coords, dims):
    """Return (first_index, inverse) grouping identical coordinate rows"""
    if coords.shape[0] == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty
    if _capacity(dims) < _LINEAR_KEY_LIMIT:
        keys = np.ravel_multi_index(tuple(coords.T.astype(np.intp)), dims)
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    else:
        _, first, inverse = np.unique(coords, axis=0, return_index=True, return_inverse=True)
    return first, inverse.reshape(-1)


def _validate_dims(dims):
    dims = np.asarray(dims)
    if dims.ndim != 1 or dims.size < 1:
        raise DimensionMismatchError(f"dims must be a non-empty vector, got shape {dims.shape}")
    if not np.issubdtype(dims.dtype, np.integer):
        if not np.all(np.equal(np.mod(dims, 1), 0)):
            raise DimensionMismatchError(f"dims must be integers: {dims.tolist()}")
    dims = tuple(int(n) for n in dims)
    if any(n < 1 for n in dims):
        raise DimensionMismatchError(f"dims must be positive: {list(dims)}")
    return dims


def from_coo(dims, coords, values, duplicate_policy='merge-sum',
             index_dtype=None, value_dtype=None):
    """Build a validated SparseTensor from 0-based coordinates and values"""
    if duplicate_policy not in DUPLICATE_POLICIES:
        raise InvalidParameterError(
            f"duplicate_policy must be one of {DUPLICATE_POLICIES}, got {duplicate_policy!r}")
    index_dtype = np.dtype(index_dtype or DEFAULT_INDEX_DTYPE)
    value_dtype = np.dtype(value_dtype or DEFAULT_VALUE_DTYPE)

    dims = _validate_dims(dims)
    d = len(dims)
    if max(dims) - 1 > np.iinfo(index_dtype).max:
        raise CapacityError(f"mode length {max(dims)} does not fit {index_dtype.name} coordinates")

    values = np.array(values, dtype=value_dtype).reshape(-1)
    coords = np.asarray(coords)
    if coords.size == 0:
        coords = coords.reshape(0, d)
    if coords.ndim != 2 or coords.shape[1] != d:
        raise DimensionMismatchError(
            f"coords must be a P x {d} table, got shape {coords.shape}")
    if coords.shape[0] != values.shape[0]:
        raise DimensionMismatchError(
            f"{coords.shape[0]} coordinate rows but {values.shape[0]} values")
    if not np.issubdtype(coords.dtype, np.integer):
        if coords.size and not np.all(np.equal(np.mod(coords, 1), 0)):
            raise TensorFormatError("coordinates must be integral")
    # range check on the caller's values; a narrow index dtype would wrap
    if coords.shape[0]:
        upper = np.asarray(dims, dtype=np.int64)
        bad = (coords < 0) | (coords >= upper)
        if bad.any():
            row, mode = np.argwhere(bad)[0]
            raise CoordinateRangeError(
                f"nonzero {row}: coordinate {int(coords[row, mode])} outside "
                f"[0, {dims[mode]}) in mode {mode}")
    coords = coords.astype(index_dtype)

    first, inverse = _group_duplicates(coords, dims)
    if first.size < coords.shape[0]:
        if duplicate_policy == 'error':
            counts = np.bincount(inverse)
            group = int(np.argmax(counts > 1))
            raise DuplicateCoordinateError(
                f"duplicate coordinate {tuple(int(c) for c in coords[first[group]])} "
                f"appears {counts[group]} times")
        # Renumber groups by first occurrence so output order follows input order
        order = np.argsort(first, kind='stable')
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        merged = np.bincount(rank[inverse], weights=values.astype(np.float64),
                             minlength=order.size)
        logger.debug(f"Merged {coords.shape[0] - order.size} duplicate nonzeros")
        coords = coords[first[order]]
        values = merged.astype(value_dtype)

    return SparseTensor(dims, coords, values)


def _read_text(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, 'rb') as f:
            raw = f.read()
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode('utf-8')
        except UnicodeDecodeError as e:
            raise TensorFormatError(f"input is not UTF-8 text: {e}") from e
    return raw


def _scan_header(text):
    """Return (header dims or None, first data line or None)"""
    header_dims = None
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith('#'):
            match = _DIMS_HEADER.match(stripped)
            if match and header_dims is None:
                try:
                    header_dims = [int(tok) for tok in match.group(1).split()]
                except ValueError as e:
                    raise TensorFormatError(f"malformed dims header: {stripped!r}") from e
            continue
        return header_dims, stripped
    return header_dims, None


def read_tns(source, index_dtype=None, value_dtype=None):
    """
    Parse FROSTT .tns text: each data line holds d 1-based indices then one
    value. Blank lines and '#' comments are skipped; a '# dims: ...' comment
    before the first data line fixes the dimensions, otherwise they are the
    per-mode maxima. Duplicates are merge-summed.
    """
    text = _read_text(source)
    header_dims, first_line = _scan_header(text)
    if first_line is None:
        raise TensorFormatError("empty .tns input: no data lines")

    ncols = len(first_line.split())
    if ncols < 2:
        raise TensorFormatError(f"data line needs at least one index and a value: {first_line!r}")
    d = ncols - 1

    try:
        frame = pd.read_csv(
            io.StringIO(text),
            sep=r'\s+',
            comment='#',
            header=None,
            names=list(range(ncols)),
            skip_blank_lines=True,
            dtype=np.float64,
            float_precision='round_trip',
        )
    except pd.errors.ParserError as e:
        raise TensorFormatError(f"inconsistent column count: {e}") from e
    except ValueError as e:
        raise TensorFormatError(f"non-numeric token: {e}") from e

    table = frame.to_numpy(dtype=np.float64)
    if np.isnan(table).any():
        row = int(np.argwhere(np.isnan(table))[0][0])
        raise TensorFormatError(
            f"inconsistent column count: data line {row + 1} has fewer than {ncols} fields")
    if not np.isfinite(table[:, d]).all():
        raise TensorFormatError("values must be finite")

    indices = table[:, :d]
    if not np.all(np.equal(np.floor(indices), indices)):
        raise TensorFormatError("indices must be integers")
    if indices.size and indices.min() < 1:
        raise TensorFormatError("indices are 1-based and must be >= 1")
    coords = indices.astype(np.int64) - 1

    if header_dims is not None:
        if len(header_dims) != d:
            raise TensorFormatError(
                f"dims header lists {len(header_dims)} modes but data lines have {d}")
        dims = header_dims
    else:
        dims = (coords.max(axis=0) + 1).tolist()

    tensor = from_coo(dims, coords, table[:, d], duplicate_policy='merge-sum',
                      index_dtype=index_dtype, value_dtype=value_dtype)
    logger.info(f"Read .tns tensor: dims={list(tensor.dims)}, nnz={tensor.nnz}")
    return tensor


def _format_tns(X):
    lines = ["# dims: " + " ".join(str(n) for n in X.dims)]
    one_based = X.coords.astype(np.int64) + 1
    for row, value in zip(one_based.tolist(), X.values.tolist()):
        lines.append(" ".join(str(c) for c in row) + " " + repr(float(value)))
    return "\n".join(lines) + "\n"


def write_tns(X, sink):
    """Write one line per nonzero: 1-based indices then the value at full precision"""
    text = _format_tns(X)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, 'w', encoding='utf-8') as f:
            f.write(text)
    elif isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode('utf-8'))
    logger.debug(f"Wrote {X.nnz} nonzeros")


def random_sparse(dims, nnz, seed, index_dtype=None, value_dtype=None):
    """nnz distinct uniformly random coordinates with U[0,1) values; deterministic per seed"""
    dims = _validate_dims(dims)
    nnz = int(nnz)
    if nnz < 0:
        raise InvalidParameterError(f"nnz must be non-negative, got {nnz}")
    capacity = _capacity(dims)
    if nnz > capacity:
        raise CapacityError(f"nnz={nnz} exceeds tensor capacity {capacity}")

    rng = np.random.default_rng(seed)
    d = len(dims)

    if capacity < _LINEAR_KEY_LIMIT and 2 * nnz >= capacity:
        keys = rng.choice(capacity, size=nnz, replace=False)
        coords = np.stack(np.unravel_index(keys, dims), axis=1).astype(np.int64)
    else:
        coords = np.empty((0, d), dtype=np.int64)
        while coords.shape[0] < nnz:
            need = nnz - coords.shape[0]
            batch = np.column_stack(
                [rng.integers(0, n, size=need + need // 8 + 16) for n in dims])
            merged = np.concatenate([coords, batch])
            first, _ = _group_duplicates(merged, dims)
            coords = merged[np.sort(first)][:nnz]

    values = rng.random(nnz)
    return from_coo(dims, coords.reshape(nnz, d), values, duplicate_policy='error',
                    index_dtype=index_dtype, value_dtype=value_dtype)


@njit(nogil=True, cache=True)
def _counting_sort_perm(keys, mode_length):
    counts = np.zeros(mode_length + 1, dtype=np.int64)
    for i in range(keys.shape[0]):
        counts[keys[i] + 1] += 1
    for k in range(mode_length):
        counts[k + 1] += counts[k]
    perm = np.empty(keys.shape[0], dtype=np.int64)
    for i in range(keys.shape[0]):
        k = keys[i]
        perm[counts[k]] = i
        counts[k] += 1
    return perm


def _stable_mode_sort(keys, mode_length, counting_sort_ratio):
    """Counting sort when the mode is short relative to P, comparison sort otherwise"""
    if mode_length * counting_sort_ratio <= keys.shape[0]:
        return _counting_sort_perm(keys, mode_length)
    return np.argsort(keys, kind='stable')


def build_perm(X, threads=1, counting_sort_ratio=8):
    """Per-mode stable sort of {0..P-1} keyed by coords(., n); modes sorted concurrently"""
    if threads < 1:
        raise InvalidParameterError(f"threads must be >= 1, got {threads}")

    def sort_mode(n):
        keys = np.ascontiguousarray(X.coords[:, n])
        perm = _stable_mode_sort(keys, X.dims[n], counting_sort_ratio)
        return perm.astype(X.index_dtype, copy=False)

    workers = max(1, min(int(threads), X.ndims))
    if workers == 1:
        perms = [sort_mode(n) for n in range(X.ndims)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            perms = list(pool.map(sort_mode, range(X.ndims)))
    return PermutationSet(perms)


def frobenius_norm(X):
    values = X.values.astype(np.float64, copy=False)
    return float(np.sqrt(np.dot(values, values)))


def storage_bytes(X, with_perm=False, s_r=8, s_o=8):
    """COO footprint (s_r + d*s_o)*P, or (s_r + 2*d*s_o)*P with one permutation per mode"""
    if s_r <= 0 or s_o <= 0:
        raise InvalidParameterError(f"byte sizes must be positive, got s_r={s_r}, s_o={s_o}")
    index_copies = 2 if with_perm else 1
    return (int(s_r) + index_copies * X.ndims * int(s_o)) * X.nnz
