"""Tests for the CP-ALS driver and the normal-equation solve"""

import numpy as np
import pytest

from conftest import dense_as_sparse
from kestrel_config import DEFAULT_CONFIG
from kestrel_cpals import AlsOptions, AlsTrace, cp_als, solve_spd
from kestrel_errors import InvalidParameterError, SingularSystemError, ZeroNormError
from kestrel_ktensor import KTensor, random_ktensor
from kestrel_mttkrp import MttkrpVariant
from kestrel_oracle import densify, reconstruct
from kestrel_sptensor import from_coo, random_sparse


class TestSolveSpd:

    def test_identity(self):
        B = np.random.default_rng(0).random((4, 6))
        np.testing.assert_allclose(solve_spd(np.eye(4), B), B, rtol=1e-15)

    def test_scaled_identity(self):
        np.testing.assert_allclose(solve_spd(2.0 * np.eye(3), np.ones((3, 2))), 0.5)

    def test_constructed_solution(self):
        rng = np.random.default_rng(1)
        Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        G = Q.T @ np.diag(np.linspace(1.0, 10.0, 8)) @ Q
        G = (G + G.T) / 2
        Z = rng.standard_normal((8, 5))
        solved = solve_spd(G, G @ Z)
        assert np.linalg.norm(solved - Z) / np.linalg.norm(Z) < 1e-9

    def test_regularization_shift(self):
        Z = solve_spd(np.zeros((2, 2)), np.ones((2, 1)), regularization=4.0)
        np.testing.assert_allclose(Z, 0.25)

    def test_indefinite_falls_back(self):
        G = np.array([[1.0, 2.0], [2.0, 1.0]])
        Z = np.array([[1.0], [-2.0]])
        np.testing.assert_allclose(solve_spd(G, G @ Z), Z, rtol=1e-12)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            solve_spd(np.ones((3, 3)), np.arange(3.0).reshape(3, 1))

    def test_bad_inputs(self):
        with pytest.raises(InvalidParameterError):
            solve_spd(np.ones((2, 3)), np.ones((2, 1)))
        with pytest.raises(InvalidParameterError):
            solve_spd(np.eye(2), np.array([[np.nan], [1.0]]))
        with pytest.raises(InvalidParameterError):
            solve_spd(np.eye(2), np.ones((2, 1)), regularization=-1.0)


class TestOptions:

    @pytest.mark.parametrize('field,value', [
        ('rank', 0), ('max_iters', 0), ('fit_tolerance', -1.0), ('regularization', -0.1), ('threads', 0),
    ])
    def test_invariants(self, field, value):
        with pytest.raises(InvalidParameterError):
            AlsOptions(**{field: value})

    def test_variant_from_text(self):
        assert AlsOptions(variant='perm').variant is MttkrpVariant.PERMUTED

    def test_from_config(self):
        opts = AlsOptions.from_config(DEFAULT_CONFIG, rank=4, seed=None)
        assert opts.rank == 4
        assert opts.seed == DEFAULT_CONFIG['als']['seed']
        assert opts.max_iters == DEFAULT_CONFIG['als']['max_iters']
        assert opts.nzptm == 128


def unit_columns(M):
    for A in M.factors:
        np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-12)


class TestCpAls:

    def test_rank_one_recovery(self):
        truth = random_ktensor((5, 6, 7), 1, seed=3)
        X = dense_as_sparse(truth)
        M, trace = cp_als(X, AlsOptions(rank=1, max_iters=50, fit_tolerance=1e-10, seed=1))
        assert trace.fits[-1] >= 0.999
        assert trace.iterations <= 50
        unit_columns(M)

    def test_single_iteration_trace(self, small_tensor):
        M, trace = cp_als(small_tensor, AlsOptions(rank=3, max_iters=1))
        assert trace.iterations == 1
        assert len(trace.mttkrp_seconds) == 1 and len(trace.mttkrp_seconds[0]) == 3
        assert len(trace.solve_seconds) == len(trace.gram_seconds) == 1
        assert len(trace.normalize_seconds) == len(trace.fit_seconds) == 1
        assert trace.sort_seconds is None
        assert trace.seed == 42

    def test_rank_four_recovery_monotone(self):
        truth = random_ktensor((10, 11, 12), 4, seed=21)
        X = dense_as_sparse(truth)
        M, trace = cp_als(X, AlsOptions(rank=4, max_iters=100, fit_tolerance=0.0, seed=5))
        assert trace.fits[-1] >= 0.99
        residuals = [1.0 - f for f in trace.fits]
        for before, after in zip(residuals, residuals[1:]):
            assert after <= before + 1e-7
        dense = densify(X).data
        brute_fit = 1.0 - np.linalg.norm(dense - reconstruct(M).data) / np.linalg.norm(dense)
        assert brute_fit == pytest.approx(trace.fits[-1], abs=1e-6)
        unit_columns(M)

    def test_variants_agree(self):
        X = random_sparse((8, 9, 10), 300, seed=4)
        fits = []
        for variant in MttkrpVariant:
            _, trace = cp_als(X, AlsOptions(rank=3, max_iters=5, fit_tolerance=0.0,
                                            variant=variant, seed=8))
            fits.append(trace.fits[-1])
        assert max(fits) - min(fits) < 1e-6

    def test_permuted_trace_has_sort_time(self, small_tensor):
        _, trace = cp_als(small_tensor, AlsOptions(rank=2, max_iters=2, variant='perm'))
        assert trace.sort_seconds is not None and trace.sort_seconds >= 0
        assert trace.mttkrp_total <= trace.total_seconds

    def test_time_accounting(self, small_tensor):
        _, trace = cp_als(small_tensor, AlsOptions(rank=4, max_iters=3, fit_tolerance=0.0))
        assert trace.mttkrp_total <= trace.total_seconds
        frame = trace.to_frame()
        assert list(frame['iteration']) == [1, 2, 3]
        assert {'mttkrp_mode0', 'mttkrp_mode2', 'gram', 'solve', 'normalize', 'fit_eval'} <= set(frame)

    def test_tolerance_stops_early(self):
        truth = random_ktensor((5, 6, 7), 1, seed=3)
        X = dense_as_sparse(truth)
        _, trace = cp_als(X, AlsOptions(rank=1, max_iters=200, fit_tolerance=1e-3))
        assert trace.iterations < 200

    def test_deterministic_for_seed(self, small_tensor):
        opts = AlsOptions(rank=3, max_iters=4, fit_tolerance=0.0, seed=17)
        M1, t1 = cp_als(small_tensor, opts)
        M2, t2 = cp_als(small_tensor, opts)
        assert t1.fits == t2.fits
        np.testing.assert_array_equal(M1.weights, M2.weights)

    def test_initial_guess(self, small_tensor):
        init = random_ktensor(small_tensor.dims, 2, seed=0)
        _, trace = cp_als(small_tensor, AlsOptions(rank=2, max_iters=1), init=init)
        assert trace.iterations == 1
        with pytest.raises(InvalidParameterError):
            cp_als(small_tensor, AlsOptions(rank=3, max_iters=1), init=init)

    @pytest.mark.parametrize('sweeps', [1, 2])
    def test_sweeps_match_dense_exact_als(self, sweeps):
        X = random_sparse((8, 9, 10), 300, seed=4)
        init = random_ktensor(X.dims, 3, seed=8)
        M, trace = cp_als(X, AlsOptions(rank=3, max_iters=sweeps, fit_tolerance=0.0), init=init)

        T = densify(X).array
        factors = [A.astype(np.float64) for A in init.factors]
        subscripts = 'ijk'
        for _ in range(sweeps):
            for n in range(3):
                others = [m for m in range(3) if m != n]
                gamma = np.ones((3, 3))
                for m in others:
                    gamma *= factors[m].T @ factors[m]
                terms = ','.join(subscripts[m] + 'r' for m in others)
                V = np.einsum(f'ijk,{terms}->{subscripts[n]}r', T, *(factors[m] for m in others))
                factors[n] = np.linalg.solve(gamma, V.T).T
        model = np.einsum('ir,jr,kr->ijk', *factors)
        expected = 1.0 - np.linalg.norm(T - model) / np.linalg.norm(T)

        assert trace.fits[-1] == pytest.approx(expected, rel=1e-9)
        np.testing.assert_allclose(reconstruct(M).array, model, rtol=1e-7, atol=1e-10)

    def test_zero_norm(self):
        with pytest.raises(ZeroNormError):
            cp_als(from_coo((2, 2), [], []), AlsOptions(rank=1))

    def test_singular_names_mode_and_iteration(self):
        X = from_coo((2, 2, 2), [(0, 0, 0)], [1.0])
        init = KTensor(np.ones(2), [np.ones((2, 2)) for _ in range(3)])
        with pytest.raises(SingularSystemError) as info:
            cp_als(X, AlsOptions(rank=2, max_iters=1), init=init)
        assert info.value.mode == 0
        assert info.value.iteration == 1
        assert 'mode 0' in str(info.value) and 'iteration 1' in str(info.value)

    def test_regularization_rescues_singular(self):
        X = from_coo((2, 2, 2), [(0, 0, 0)], [1.0])
        init = KTensor(np.ones(2), [np.ones((2, 2)) for _ in range(3)])
        M, trace = cp_als(X, AlsOptions(rank=2, max_iters=2, regularization=1e-6), init=init)
        assert np.isfinite(trace.fits).all()


def test_trace_defaults():
    trace = AlsTrace(seed=1)
    assert trace.iterations == 0
    assert trace.mttkrp_total == 0.0
    assert trace.mean_iteration_seconds() == 0.0
