import math

import numpy as np
import pytest

from hgp import (
    DimensionError,
    Hyperparameters,
    kernel_cross,
    kernel_eval,
    kernel_matrix,
    kernel_matrix_gradients,
    kernel_vector,
)
from reference import central_difference, dense_kernel


def hp_of(sigma_f=1.0, ls=(1.0,), sigma_eps=0.1):
    return Hyperparameters(sigma_f, np.asarray(ls, dtype=float), sigma_eps)


class TestHyperparameters:
    def test_positive_required(self):
        for bad in [dict(sigma_f=0.0), dict(sigma_eps=-1.0)]:
            with pytest.raises(ValueError):
                Hyperparameters(**{**dict(sigma_f=1.0, lengthscales=[1.0], sigma_eps=0.1), **bad})
        with pytest.raises(ValueError):
            Hyperparameters(1.0, [1.0, 0.0], 0.1)

    def test_log_round_trip(self):
        hp = hp_of(2.5, (0.3, 4.0, 1.2), 0.07)
        back = Hyperparameters.from_log(hp.to_log())
        assert back.sigma_f == pytest.approx(hp.sigma_f, rel=1e-15)
        assert back.sigma_eps == pytest.approx(hp.sigma_eps, rel=1e-15)
        np.testing.assert_allclose(back.lengthscales, hp.lengthscales, rtol=1e-15)

    def test_log_order_is_sigma_f_lengthscales_sigma_eps(self):
        hp = hp_of(2.0, (3.0, 4.0), 5.0)
        np.testing.assert_allclose(
            hp.to_log(), np.log([2.0, 3.0, 4.0, 5.0])
        )

    def test_isotropic(self):
        hp = Hyperparameters.isotropic(1.0, 0.5, 3, 0.1)
        np.testing.assert_array_equal(hp.lengthscales, [0.5, 0.5, 0.5])


class TestKernelEval:
    def test_identity_is_signal_variance(self):
        hp = hp_of(1.0, (1.0, 1.0))
        assert kernel_eval([0.3, -0.2], [0.3, -0.2], hp) == 1.0

    def test_scalar_hand_value(self):
        # sigma_f=2, l=1, |x-x'| = sqrt(2): 4 * exp(-1)
        hp = hp_of(2.0, (1.0,))
        assert kernel_eval([0.0], [math.sqrt(2.0)], hp) == pytest.approx(
            1.4715177646857693, rel=1e-12
        )

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        hp = hp_of(1.3, (0.5, 2.0, 1.0))
        for _ in range(50):
            a, b = rng.standard_normal(3), rng.standard_normal(3)
            assert kernel_eval(a, b, hp) == kernel_eval(b, a, hp)

    def test_bounds(self):
        rng = np.random.default_rng(1)
        hp = hp_of(1.7, (0.5, 2.0))
        top = hp.sigma_f**2
        for _ in range(50):
            a, b = rng.standard_normal(2), rng.standard_normal(2)
            v = kernel_eval(a, b, hp)
            assert 0.0 < v < top
        assert kernel_eval(a, a, hp) == top

    def test_stationarity_exact_on_integer_grid(self):
        # integer coordinates shift without rounding, so equality is exact
        hp = hp_of(1.0, (2.0, 3.0))
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, t = (rng.integers(-8, 8, size=2).astype(float) for _ in range(3))
            assert kernel_eval(a + t, b + t, hp) == kernel_eval(a, b, hp)

    def test_stationarity_float_shift(self):
        hp = hp_of(1.0, (0.7, 1.3))
        rng = np.random.default_rng(3)
        a, b, t = (rng.standard_normal(2) for _ in range(3))
        assert kernel_eval(a + t, b + t, hp) == pytest.approx(
            kernel_eval(a, b, hp), rel=1e-12
        )

    def test_dimension_mismatch_names_both(self):
        hp = hp_of(1.0, (1.0, 1.0))
        with pytest.raises(DimensionError, match="dimension 2.*dimension 3"):
            kernel_eval([0.0, 0.0], [0.0, 0.0, 0.0], hp)
        with pytest.raises(DimensionError):
            kernel_eval([0.0], [0.0], hp)


class TestKernelMatrix:
    def test_single_point(self):
        hp = hp_of(1.5, (1.0,))
        np.testing.assert_array_equal(kernel_matrix([[0.0]], hp), [[2.25]])

    def test_duplicate_inputs(self):
        hp = hp_of(1.0, (1.0,))
        np.testing.assert_array_equal(
            kernel_matrix([[0.0], [0.0]], hp), np.ones((2, 2))
        )

    def test_matches_dense_loop(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((9, 3))
        hp = hp_of(1.2, (0.6, 1.1, 2.0))
        np.testing.assert_allclose(kernel_matrix(X, hp), dense_kernel(X, hp), rtol=1e-14)

    def test_exactly_symmetric_with_signal_diagonal(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((20, 2))
        hp = hp_of(0.9, (0.8, 0.8))
        K = kernel_matrix(X, hp)
        assert np.array_equal(K, K.T)
        np.testing.assert_array_equal(np.diag(K), np.full(20, hp.sigma_f**2))

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((16, 2))
        hp = hp_of(1.0, (0.5, 0.5))
        K = kernel_matrix(X, hp)
        eigs = np.linalg.eigvalsh(K + 1e-8 * hp.sigma_f**2 * np.eye(16))
        assert eigs.min() > 0


class TestKernelGradients:
    def test_sigma_f_gradient_is_twice_kernel(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((6, 2))
        hp = hp_of(1.4, (0.9, 1.7))
        grads = kernel_matrix_gradients(X, hp)
        np.testing.assert_array_equal(grads[0], 2.0 * kernel_matrix(X, hp))

    def test_lengthscale_gradients_zero_diagonal(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((6, 3))
        grads = kernel_matrix_gradients(X, hp_of(1.0, (1.0, 2.0, 0.5)))
        for d in range(3):
            np.testing.assert_array_equal(np.diag(grads[1 + d]), np.zeros(6))

    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((8, 3))
        hp = hp_of(1.3, (0.7, 1.2, 2.5), 0.3)
        grads = kernel_matrix_gradients(X, hp)
        log0 = hp.to_log()

        for j in range(hp.num_params):
            def entry(lv, j=j):
                hpj = Hyperparameters.from_log(lv)
                return kernel_matrix(X, hpj) + hpj.sigma_eps**2 * np.eye(8)

            step = 1e-5
            e = np.zeros_like(log0)
            e[j] = step
            fd = (entry(log0 + e) - entry(log0 - e)) / (2 * step)
            scale = max(np.abs(fd).max(), 1e-12)
            assert np.abs(grads[j] - fd).max() / scale < 1e-5


class TestKernelVector:
    def test_training_row_hits_signal_variance(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((5, 2))
        hp = hp_of(1.0, (1.0, 1.0))
        v = kernel_vector(X[3], X, hp)
        assert v[3] == 1.0

    def test_decay_to_zero_far_away(self):
        hp = hp_of(1.0, (1.0,))
        v = kernel_vector([100.0], np.zeros((4, 1)), hp)
        assert np.all(v < 1e-30)

    def test_consistent_with_augmented_matrix(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((7, 2))
        x_star = rng.standard_normal(2)
        hp = hp_of(1.1, (0.8, 1.5))
        augmented = kernel_matrix(np.vstack([X, x_star]), hp)
        np.testing.assert_allclose(kernel_vector(x_star, X, hp), augmented[-1, :-1], rtol=1e-14)

    def test_cross_matches_vector_rows(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((6, 2))
        Q = rng.standard_normal((3, 2))
        hp = hp_of(1.0, (1.0, 2.0))
        C = kernel_cross(Q, X, hp)
        for i in range(3):
            np.testing.assert_array_equal(C[i], kernel_vector(Q[i], X, hp))
