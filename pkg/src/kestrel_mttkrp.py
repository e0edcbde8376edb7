"""
KESTREL MTTKRP Kernels
Matricized tensor times Khatri-Rao product for COO tensors, in four parallel variants:

  atomic      nonzero blocks, column tiles, scratch row, atomic adds into V
  blocked     same traversal with a fixed-length tile accumulator (full tiles
              compiled with a constant trip count, remainder tile at runtime length)
  perm        nonzeros visited in mode-n sorted order, one flush per row run,
              atomic only for the first and last row of each worker block
  duplicated  one private copy of V per worker, reduced at the end

Each computes V(k, j) = lambda_j * sum_{i: l_in = k} x_i * prod_{m != n} a^(m)(l_im, j).
"""

import functools
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import pandas as pd
from numba import njit, prange

from kestrel_config import get_logger
from kestrel_errors import (
    DimensionMismatchError,
    InvalidParameterError,
    MissingPermutationError,
    ModeError,
)
from kestrel_ktensor import check_compatible
from kestrel_parallel import atomic_add, thread_scope

logger = get_logger(__name__, 'MTTKRP')

NZPTM_DEFAULT = 128
MAX_CPU_FBS = 32
PROFILES = ('cpu-like', 'gpu-table')

# (largest R in range, vector_size, FBS); None closes the last open range
GPU_SIZE_TABLE = (
    (1, 1, 1),
    (2, 2, 2),
    (3, 2, 4),
    (4, 4, 4),
    (7, 4, 8),
    (8, 8, 8),
    (16, 8, 16),
    (24, 8, 24),
    (47, 8, 32),
    (48, 16, 48),
    (95, 16, 64),
    (96, 32, 96),
    (None, 32, 128),
)
GPU_THREADS_PER_TEAM = 128


class MttkrpVariant(Enum):
    ATOMIC = 'atomic'
    BLOCKED = 'blocked'
    PERMUTED = 'perm'
    DUPLICATED = 'dup'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {
            'atomic': cls.ATOMIC,
            'blocked': cls.BLOCKED,
            'perm': cls.PERMUTED,
            'permuted': cls.PERMUTED,
            'dup': cls.DUPLICATED,
            'duplicated': cls.DUPLICATED,
        }
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise InvalidParameterError(
                f"unknown MTTKRP variant {value!r}; expected one of {sorted(aliases)}") from None

    @property
    def needs_perm(self):
        return self is MttkrpVariant.PERMUTED


@dataclass(frozen=True)
class BlockingPolicy:
    fbs: int
    vector_size: int
    team_size: int
    nzptm: int
    nzpt: int
    league_size: int
    profile: str = 'cpu-like'

    def __post_init__(self):
        if self.fbs < 1 or self.vector_size < 1 or self.team_size < 1 or self.nzptm < 1:
            raise InvalidParameterError(f"blocking sizes must be >= 1: {self}")
        if self.nzpt != self.nzptm * self.team_size:
            raise InvalidParameterError(f"nzpt must equal nzptm * team_size: {self}")

    def for_nnz(self, P):
        """Same policy with league_size recomputed for P nonzeros"""
        return replace(self, league_size=-(-int(P) // self.nzpt))


def cpu_fbs(R):
    """min(2^ceil(log2 R), 32)"""
    return min(1 << (int(R) - 1).bit_length(), MAX_CPU_FBS)


def gpu_sizes(R):
    """(vector_size, FBS) for R from the GPU size table"""
    for upper, vector_size, fbs in GPU_SIZE_TABLE:
        if upper is None or R <= upper:
            return vector_size, fbs
    raise AssertionError("size table has an open last range")


def blocking_policy(R, profile='cpu-like', P=0, team_size_hint=None, nzptm=NZPTM_DEFAULT):
    """Kernel launch parameters for rank R over P nonzeros"""
    R = int(R)
    if R < 1:
        raise InvalidParameterError(f"rank must be >= 1, got {R}")
    if int(P) < 0:
        raise InvalidParameterError(f"P must be >= 0, got {P}")

    if profile == 'cpu-like':
        fbs, vector_size, team_size = cpu_fbs(R), 1, 1
    elif profile == 'gpu-table':
        vector_size, fbs = gpu_sizes(R)
        team_size = int(team_size_hint) if team_size_hint else GPU_THREADS_PER_TEAM // vector_size
    else:
        raise InvalidParameterError(f"profile must be one of {PROFILES}, got {profile!r}")

    nzptm = int(nzptm)
    nzpt = nzptm * team_size
    policy = BlockingPolicy(
        fbs=fbs,
        vector_size=vector_size,
        team_size=team_size,
        nzptm=nzptm,
        nzpt=nzpt,
        league_size=-(-int(P) // nzpt),
        profile=profile,
    )
    logger.debug(f"Blocking policy for R={R}, P={P}: {policy}")
    return policy


def flops_per_nonzero(d, R):
    """d*R multiplies plus R adds per nonzero"""
    return int(d) * int(R) + int(R)


class PermutedFlushRecorder:
    """
    Write log for the permuted kernel. Every flush of an accumulated row is
    recorded at the traversal position that closed the run, per column tile.
    """

    PLAIN = 1
    ATOMIC = 2

    def __init__(self):
        self.rows = np.empty(0, dtype=np.int64)
        self.kinds = np.empty(0, dtype=np.int8)
        self.nnz = 0
        self.nzptm = NZPTM_DEFAULT
        self.fbs = 1

    def allocate(self, n_tiles, P, policy):
        self.nnz = int(P)
        self.nzptm = policy.nzptm
        self.fbs = policy.fbs
        self.rows = np.full(n_tiles * self.nnz, -1, dtype=np.int64)
        self.kinds = np.zeros(n_tiles * self.nnz, dtype=np.int8)

    def flushes(self):
        """One row per flush: tile, position, worker block, row, atomic"""
        hit = np.flatnonzero(self.kinds)
        if self.nnz == 0:
            tiles = positions = hit
        else:
            tiles, positions = np.divmod(hit, self.nnz)
        return pd.DataFrame({
            'tile': tiles,
            'position': positions,
            'block': positions // self.nzptm if self.nnz else positions,
            'row': self.rows[hit],
            'atomic': self.kinds[hit] == self.ATOMIC,
        })


_NO_LOG_ROWS = np.empty(0, dtype=np.int64)
_NO_LOG_KINDS = np.empty(0, dtype=np.int8)


@njit(inline='always')
def _load_tile(tmp, nj, x_val, weights, jb, factors, coords, i, n):
    for j in range(nj):
        tmp[j] = x_val * weights[jb + j]
    for m in range(coords.shape[1]):
        if m != n:
            A = factors[m]
            row = coords[i, m]
            for j in range(nj):
                tmp[j] *= A[row, jb + j]


@njit(inline='always')
def _atomic_store_add(V, base, tmp, nj):
    for j in range(nj):
        atomic_add(V, base + j, tmp[j])


@njit(inline='always')
def _store_add(V, base, tmp, nj):
    for j in range(nj):
        V[base + j] += tmp[j]


@njit(parallel=True, cache=True)
def _mttkrp_atomic(coords, values, weights, factors, n, V, R, fbs, nzptm, team_size, league_size):
    P = values.shape[0]
    nzpt = nzptm * team_size
    for league_rank in prange(league_size):
        tmp = np.empty((team_size, fbs), dtype=V.dtype)
        for jb in range(0, R, fbs):
            nj = min(fbs, R - jb)
            for team_rank in range(team_size):
                scratch = tmp[team_rank]
                i_offset = league_rank * nzpt + team_rank * nzptm
                ni = min(nzptm, P - i_offset)
                for i in range(i_offset, i_offset + ni):
                    _load_tile(scratch, nj, values[i], weights, jb, factors, coords, i, n)
                    _atomic_store_add(V, coords[i, n] * R + jb, scratch, nj)


@functools.lru_cache(maxsize=None)
def _blocked_kernel(fbs):
    """Blocked kernel specialized for a tile length known at compile time"""
    FBS = int(fbs)

    @njit(parallel=True)
    def kernel(coords, values, weights, factors, n, V, R, nzptm, team_size, league_size):
        P = values.shape[0]
        nzpt = nzptm * team_size
        for league_rank in prange(league_size):
            tmp = np.empty(FBS, dtype=V.dtype)
            for jb in range(0, R, FBS):
                full = jb + FBS <= R
                nj = R - jb
                for team_rank in range(team_size):
                    i_offset = league_rank * nzpt + team_rank * nzptm
                    ni = min(nzptm, P - i_offset)
                    for i in range(i_offset, i_offset + ni):
                        base = coords[i, n] * R + jb
                        if full:
                            _load_tile(tmp, FBS, values[i], weights, jb, factors, coords, i, n)
                            _atomic_store_add(V, base, tmp, FBS)
                        else:
                            _load_tile(tmp, nj, values[i], weights, jb, factors, coords, i, n)
                            _atomic_store_add(V, base, tmp, nj)

    return kernel


@njit(inline='always')
def _permuted_block(coords, values, weights, factors, n, perm, V, R, jb, nj,
                    i_offset, ni, tmp, val, log_base, log_rows, log_kinds, record):
    for j in range(nj):
        val[j] = 0
    first_row = coords[perm[i_offset], n]
    row_prev = first_row
    last = i_offset + ni - 1
    for i in range(i_offset, i_offset + ni):
        p = perm[i]
        row = coords[p, n]
        if row != row_prev:
            base = row_prev * R + jb
            if row_prev == first_row:
                _atomic_store_add(V, base, val, nj)
                kind = 2
            else:
                _store_add(V, base, val, nj)
                kind = 1
            if record:
                log_rows[log_base + i - 1] = row_prev
                log_kinds[log_base + i - 1] = kind
            for j in range(nj):
                val[j] = 0
            row_prev = row
        _load_tile(tmp, nj, values[p], weights, jb, factors, coords, p, n)
        for j in range(nj):
            val[j] += tmp[j]
        if i == last:
            _atomic_store_add(V, row * R + jb, val, nj)
            if record:
                log_rows[log_base + i] = row
                log_kinds[log_base + i] = 2


@functools.lru_cache(maxsize=None)
def _permuted_kernel(fbs):
    """Permuted-traversal kernel specialized for a tile length known at compile time"""
    FBS = int(fbs)

    @njit(parallel=True)
    def kernel(coords, values, weights, factors, n, perm, V, R, nzptm, team_size, league_size,
               log_rows, log_kinds, record):
        P = values.shape[0]
        nzpt = nzptm * team_size
        for league_rank in prange(league_size):
            tmp = np.empty(FBS, dtype=V.dtype)
            val = np.empty(FBS, dtype=V.dtype)
            for jb in range(0, R, FBS):
                full = jb + FBS <= R
                nj = R - jb
                log_base = (jb // FBS) * P
                for team_rank in range(team_size):
                    i_offset = league_rank * nzpt + team_rank * nzptm
                    ni = min(nzptm, P - i_offset)
                    if ni <= 0:
                        continue
                    if full:
                        _permuted_block(coords, values, weights, factors, n, perm, V, R, jb, FBS,
                                        i_offset, ni, tmp, val, log_base, log_rows, log_kinds, record)
                    else:
                        _permuted_block(coords, values, weights, factors, n, perm, V, R, jb, nj,
                                        i_offset, ni, tmp, val, log_base, log_rows, log_kinds, record)

    return kernel


@njit(parallel=True, cache=True)
def _mttkrp_duplicated(coords, values, weights, factors, n, V, R, fbs, nchunks):
    P = values.shape[0]
    rows = V.shape[0] // R
    private = np.zeros((nchunks, V.shape[0]), dtype=V.dtype)
    chunk = (P + nchunks - 1) // nchunks
    for c in prange(nchunks):
        tmp = np.empty(fbs, dtype=V.dtype)
        Vc = private[c]
        start = c * chunk
        stop = min(P, start + chunk)
        for jb in range(0, R, fbs):
            nj = min(fbs, R - jb)
            for i in range(start, stop):
                _load_tile(tmp, nj, values[i], weights, jb, factors, coords, i, n)
                _store_add(Vc, coords[i, n] * R + jb, tmp, nj)
    for r in prange(rows):
        for c in range(nchunks):
            for j in range(R):
                V[r * R + j] += private[c, r * R + j]


def _check_launch(X, M, n, variant, perms):
    if not 0 <= int(n) < X.ndims:
        raise ModeError(f"mode {n} out of range for a {X.ndims}-way tensor")
    check_compatible(X, M)
    if variant.needs_perm:
        if perms is None:
            raise MissingPermutationError("the permuted variant needs a PermutationSet (see build_perm)")
        if perms.ndims != X.ndims or perms.nnz != X.nnz:
            raise DimensionMismatchError(
                f"permutation set covers {perms.ndims} modes x {perms.nnz} nonzeros, "
                f"tensor has {X.ndims} x {X.nnz}")


def mttkrp(X, M, n, variant=MttkrpVariant.ATOMIC, policy=None, perms=None, threads=1,
           recorder=None, chunk_size=1):
    """
    Compute the I_n x R matrix V for mode n with the chosen variant.
    policy defaults to the cpu-like blocking policy for M's rank; its league
    size is recomputed for X. recorder (PermutedFlushRecorder) logs the write
    discipline of the permuted variant.
    """
    variant = MttkrpVariant.parse(variant)
    n = int(n)
    _check_launch(X, M, n, variant, perms)

    R = M.rank
    P = X.nnz
    policy = (policy or blocking_policy(R, 'cpu-like', P)).for_nnz(P)
    rows = X.dims[n]
    V = np.zeros(rows * R, dtype=M.dtype)
    if P == 0:
        return V.reshape(rows, R)

    coords = X.coords
    values = X.values.astype(M.dtype, copy=False)
    weights = M.weights
    factors = tuple(M.factors)

    with thread_scope(threads, chunk_size) as width:
        if variant is MttkrpVariant.ATOMIC:
            _mttkrp_atomic(coords, values, weights, factors, n, V, R,
                           policy.fbs, policy.nzptm, policy.team_size, policy.league_size)
        elif variant is MttkrpVariant.BLOCKED:
            _blocked_kernel(policy.fbs)(coords, values, weights, factors, n, V, R,
                                        policy.nzptm, policy.team_size, policy.league_size)
        elif variant is MttkrpVariant.PERMUTED:
            if recorder is not None:
                n_tiles = -(-R // policy.fbs)
                recorder.allocate(n_tiles, P, policy)
                log_rows, log_kinds, record = recorder.rows, recorder.kinds, True
            else:
                log_rows, log_kinds, record = _NO_LOG_ROWS, _NO_LOG_KINDS, False
            perm = perms[n]
            _permuted_kernel(policy.fbs)(coords, values, weights, factors, n, perm, V, R,
                                         policy.nzptm, policy.team_size, policy.league_size,
                                         log_rows, log_kinds, record)
        else:
            nchunks = max(1, min(width, P))
            _mttkrp_duplicated(coords, values, weights, factors, n, V, R, policy.fbs, nchunks)

    return V.reshape(rows, R)
