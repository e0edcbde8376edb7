"""
KESTREL CP-ALS Driver
Alternating least squares for the CP decomposition of a sparse tensor.
Each mode update: V = MTTKRP, Gamma = Hadamard product of the other Grams,
A = (Gamma + reg*I)^-1 V^T, then columns normalized into lambda.
"""

import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy.linalg as sla

from kestrel_config import get_logger
from kestrel_errors import InvalidParameterError, SingularSystemError, ZeroNormError
from kestrel_ktensor import KTensor, fit, gram, normalize_columns, random_ktensor
from kestrel_mttkrp import NZPTM_DEFAULT, MttkrpVariant, blocking_policy, mttkrp
from kestrel_sptensor import build_perm, frobenius_norm

logger = get_logger(__name__, 'ALS')


@dataclass
class AlsOptions:
    rank: int = 16
    max_iters: int = 10
    fit_tolerance: float = 1e-4
    variant: MttkrpVariant = MttkrpVariant.BLOCKED
    threads: int = 1
    seed: int = 42
    regularization: float = 0.0
    profile: str = 'cpu-like'
    nzptm: int = NZPTM_DEFAULT
    chunk_size: int = 1
    counting_sort_ratio: int = 8

    def __post_init__(self):
        self.variant = MttkrpVariant.parse(self.variant)
        if self.rank < 1:
            raise InvalidParameterError(f"rank must be >= 1, got {self.rank}")
        if self.max_iters < 1:
            raise InvalidParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.fit_tolerance < 0:
            raise InvalidParameterError(f"fit_tolerance must be >= 0, got {self.fit_tolerance}")
        if self.regularization < 0:
            raise InvalidParameterError(f"regularization must be >= 0, got {self.regularization}")
        if self.threads < 1:
            raise InvalidParameterError(f"threads must be >= 1, got {self.threads}")

    @classmethod
    def from_config(cls, config, **overrides):
        """Options from the als/mttkrp/sorting config sections; keyword overrides win"""
        als = config.get('als', {})
        kernel = config.get('mttkrp', {})
        values = {
            'rank': als.get('rank', cls.rank),
            'max_iters': als.get('max_iters', cls.max_iters),
            'fit_tolerance': als.get('fit_tolerance', cls.fit_tolerance),
            'regularization': als.get('regularization', cls.regularization),
            'seed': als.get('seed', cls.seed),
            'profile': kernel.get('profile', cls.profile),
            'nzptm': kernel.get('nzptm', cls.nzptm),
            'chunk_size': kernel.get('chunk_size', cls.chunk_size),
            'counting_sort_ratio': config.get('sorting', {}).get('counting_sort_ratio', cls.counting_sort_ratio),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class AlsTrace:
    """Per-iteration record of one cp_als run"""
    seed: int
    fits: List[float] = field(default_factory=list)
    mttkrp_seconds: List[List[float]] = field(default_factory=list)
    gram_seconds: List[float] = field(default_factory=list)
    solve_seconds: List[float] = field(default_factory=list)
    normalize_seconds: List[float] = field(default_factory=list)
    fit_seconds: List[float] = field(default_factory=list)
    total_seconds: float = 0.0
    sort_seconds: Optional[float] = None

    @property
    def iterations(self):
        return len(self.fits)

    @property
    def mttkrp_total(self):
        return float(sum(sum(modes) for modes in self.mttkrp_seconds))

    def mean_iteration_seconds(self):
        """Iteration wall time excluding the one-off sort"""
        if not self.fits:
            return 0.0
        loop = self.total_seconds - (self.sort_seconds or 0.0)
        return loop / self.iterations

    def to_frame(self):
        """One row per iteration with the time breakdown"""
        rows = []
        for it in range(self.iterations):
            row = {'iteration': it + 1, 'fit': self.fits[it]}
            for n, seconds in enumerate(self.mttkrp_seconds[it]):
                row[f'mttkrp_mode{n}'] = seconds
            row['mttkrp'] = sum(self.mttkrp_seconds[it])
            row['gram'] = self.gram_seconds[it]
            row['solve'] = self.solve_seconds[it]
            row['normalize'] = self.normalize_seconds[it]
            row['fit_eval'] = self.fit_seconds[it]
            rows.append(row)
        return pd.DataFrame(rows)


def solve_spd(G, B, regularization=0.0):
    """
    Solve (G + regularization*I) Z = B for symmetric G. Cholesky first; a
    symmetric indefinite (pivoted) solve when Cholesky fails. Ill-conditioning
    reported by the pivoted solve is an error.
    """
    G = np.asarray(G, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidParameterError(f"G must be square, got shape {G.shape}")
    if regularization < 0:
        raise InvalidParameterError(f"regularization must be >= 0, got {regularization}")
    if not np.isfinite(B).all():
        raise InvalidParameterError("right-hand sides must be finite")

    A = G + regularization * np.eye(G.shape[0]) if regularization else G
    try:
        return sla.cho_solve(sla.cho_factor(A, lower=False, check_finite=True), B)
    except sla.LinAlgError as e:
        logger.warning(f"Cholesky failed ({e}); falling back to a pivoted symmetric solve")

    with warnings.catch_warnings():
        warnings.simplefilter('error', sla.LinAlgWarning)
        try:
            Z = sla.solve(A, B, assume_a='sym')
        except (sla.LinAlgError, sla.LinAlgWarning) as e:
            raise SingularSystemError(f"normal equations are singular: {e}") from e
    if not np.isfinite(Z).all():
        raise SingularSystemError("normal-equation solve produced non-finite values")
    return Z


def _hadamard_of_others(grams, n):
    R = grams[0].shape[0]
    gamma = np.ones((R, R))
    for m, G in enumerate(grams):
        if m != n:
            gamma *= G
    return gamma


def cp_als(X, opts, init=None):
    """
    CP decomposition of X by alternating least squares.
    Returns (KTensor with unit-norm columns, AlsTrace). Stops after
    opts.max_iters iterations or when the fit changes by less than
    opts.fit_tolerance.
    """
    start = time.perf_counter()
    norm_x = frobenius_norm(X)
    if norm_x == 0:
        raise ZeroNormError("cp_als needs a tensor with nonzero norm")

    R = opts.rank
    trace = AlsTrace(seed=opts.seed)
    policy = blocking_policy(R, opts.profile, X.nnz, nzptm=opts.nzptm)

    perms = None
    if opts.variant.needs_perm:
        t0 = time.perf_counter()
        perms = build_perm(X, opts.threads, opts.counting_sort_ratio)
        trace.sort_seconds = time.perf_counter() - t0
        logger.debug(f"Permutations built in {trace.sort_seconds:.4f}s")

    if init is None:
        M = random_ktensor(X.dims, R, opts.seed, dtype=X.value_dtype)
    else:
        M = init.copy()
        if M.rank != R or tuple(M.dims) != tuple(X.dims):
            raise InvalidParameterError(
                f"initial guess is {M.dims} with R={M.rank}, expected {X.dims} with R={R}")
    # Grams must describe the factors the solves actually see
    M = normalize_columns(M.with_unit_weights())
    grams = [gram(A) for A in M.factors]

    logger.info(f"CP-ALS: {X!r}, R={R}, variant={opts.variant.value}, threads={opts.threads}")
    fit_prev = None
    for it in range(opts.max_iters):
        mode_seconds = []
        t_gram = t_solve = t_norm = 0.0
        for n in range(X.ndims):
            # lambda = 1 during the update keeps the kernel's weight multiply neutral
            unit = M.with_unit_weights()
            t0 = time.perf_counter()
            V = mttkrp(X, unit, n, opts.variant, policy, perms, opts.threads, chunk_size=opts.chunk_size)
            mode_seconds.append(time.perf_counter() - t0)

            t0 = time.perf_counter()
            gamma = _hadamard_of_others(grams, n)
            t_gram += time.perf_counter() - t0

            t0 = time.perf_counter()
            try:
                A = solve_spd(gamma, V.T.astype(np.float64), opts.regularization).T
            except SingularSystemError as e:
                raise SingularSystemError(
                    f"mode {n} update in iteration {it + 1}: {e}", mode=n, iteration=it + 1) from e
            t_solve += time.perf_counter() - t0

            t0 = time.perf_counter()
            factors = list(unit.factors)
            factors[n] = np.ascontiguousarray(A, dtype=unit.dtype)
            M = normalize_columns(KTensor(unit.weights, factors, M.metadata))
            t_norm += time.perf_counter() - t0

            t0 = time.perf_counter()
            grams[n] = gram(M.factors[n])
            t_gram += time.perf_counter() - t0

        t0 = time.perf_counter()
        fit_now = fit(X, M, opts.threads)
        trace.fit_seconds.append(time.perf_counter() - t0)

        trace.fits.append(fit_now)
        trace.mttkrp_seconds.append(mode_seconds)
        trace.gram_seconds.append(t_gram)
        trace.solve_seconds.append(t_solve)
        trace.normalize_seconds.append(t_norm)
        logger.info(f"Iter {it + 1}: fit = {fit_now:.6f}")

        if fit_prev is not None and abs(fit_now - fit_prev) < opts.fit_tolerance:
            logger.info(f"Converged after {it + 1} iterations (fit change < {opts.fit_tolerance})")
            break
        fit_prev = fit_now

    trace.total_seconds = time.perf_counter() - start
    M.metadata['seed'] = opts.seed
    return M, trace
