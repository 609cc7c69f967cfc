import math

import numpy as np
import pytest

from hgp import (
    CholeskyError,
    Dataset,
    DimensionError,
    Hyperparameters,
    fit,
    lml_gradient,
    log_marginal_likelihood,
    predict,
    predict_batch,
)
from hgp.expert import VARIANCE_FLOOR
from reference import (
    central_difference,
    dense_lml,
    dense_lml_gradient,
    dense_noisy_kernel,
    dense_predict,
    relative_gradient_error,
)


def unit_hp(dim=1, sigma_f=1.0, lengthscale=1.0, sigma_eps=1.0):
    return Hyperparameters.isotropic(sigma_f, lengthscale, dim, sigma_eps)


def random_problem(p, dim, seed, sigma_eps=0.2):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(p, dim))
    y = np.sin(2.0 * X[:, 0]) + 0.3 * rng.standard_normal(p)
    hp = Hyperparameters(1.1, rng.uniform(0.4, 1.5, size=dim), sigma_eps)
    return Dataset(X, y), hp


class TestDataset:
    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            Dataset([[0.0], [1.0]], [1.0])

    def test_read_only(self):
        data = Dataset([[0.0], [1.0]], [1.0, 2.0])
        with pytest.raises(ValueError):
            data.X[0, 0] = 5.0


class TestFit:
    def test_scalar_case(self):
        data = Dataset([[0.0]], [2.0])
        state = fit(data, [0], unit_hp())
        np.testing.assert_allclose(state.chol, [[math.sqrt(2.0)]], rtol=1e-15)
        np.testing.assert_allclose(state.alpha, [1.0], rtol=1e-15)
        assert state.jitter == 0.0

    def test_duplicate_rows_with_tiny_noise_succeed_via_jitter(self):
        data = Dataset([[0.0], [0.0]], [1.0, 1.0])
        hp = Hyperparameters(1.0, [1.0], 1e-12)
        state = fit(data, [0, 1], hp)
        assert np.all(np.isfinite(state.alpha))

    def test_reconstruction(self):
        data, hp = random_problem(32, 2, seed=0)
        state = fit(data, np.arange(32), hp)
        reconstructed = state.chol @ state.chol.T
        target = dense_noisy_kernel(data.X, hp)
        err = np.linalg.norm(reconstructed - target) / np.linalg.norm(target)
        assert err < 1e-10

    def test_bad_indices(self):
        data = Dataset([[0.0], [1.0]], [1.0, 2.0])
        with pytest.raises(ValueError):
            fit(data, [], unit_hp())
        with pytest.raises(IndexError):
            fit(data, [0, 2], unit_hp())

    def test_hopeless_matrix_reports_jitter(self):
        # degenerate scales underflow the whole matrix to zero
        data = Dataset([[0.0], [0.0]], [1.0, 1.0])
        hp = Hyperparameters(1e-300, [1.0], 1e-300)
        with pytest.raises(CholeskyError, match="jitter"):
            fit(data, [0, 1], hp)


class TestLogMarginalLikelihood:
    def test_scalar_hand_value(self):
        data = Dataset([[0.0]], [1.0])
        state = fit(data, [0], unit_hp())
        assert log_marginal_likelihood(state, data) == pytest.approx(
            -1.5155121234846454, rel=1e-12
        )

    def test_zero_target(self):
        hp = Hyperparameters(1.3, [1.0], 0.4)
        data = Dataset([[0.0]], [0.0])
        state = fit(data, [0], hp)
        expected = -0.5 * math.log(hp.sigma_f**2 + hp.sigma_eps**2) - 0.5 * math.log(2 * math.pi)
        assert log_marginal_likelihood(state, data) == pytest.approx(expected, rel=1e-14)

    def test_matches_dense_formula(self):
        data, hp = random_problem(64, 3, seed=1)
        state = fit(data, np.arange(64), hp)
        assert log_marginal_likelihood(state, data) == pytest.approx(
            dense_lml(data.X, data.y, hp), rel=1e-8, abs=1e-8
        )

    def test_row_permutation_invariance(self):
        data, hp = random_problem(24, 2, seed=2)
        rng = np.random.default_rng(3)
        order = rng.permutation(24)
        a = log_marginal_likelihood(fit(data, np.arange(24), hp), data)
        b = log_marginal_likelihood(fit(data, order, hp), data)
        assert a == pytest.approx(b, rel=1e-12)


class TestGradient:
    def test_finite_differences(self):
        data, hp = random_problem(32, 3, seed=4)
        state = fit(data, np.arange(32), hp)
        grad = lml_gradient(state, data)

        def value(log_theta):
            hp_t = Hyperparameters.from_log(log_theta)
            return log_marginal_likelihood(fit(data, np.arange(32), hp_t), data)

        fd = central_difference(value, hp.to_log())
        assert relative_gradient_error(grad, fd) < 1e-5

    def test_matches_dense_gradient(self):
        data, hp = random_problem(20, 2, seed=5)
        state = fit(data, np.arange(20), hp)
        np.testing.assert_allclose(
            lml_gradient(state, data), dense_lml_gradient(data.X, data.y, hp), rtol=1e-8
        )

    def test_zero_targets_signal_gradient_nonpositive(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((10, 2))
        data = Dataset(X, np.zeros(10))
        hp = Hyperparameters(1.0, [0.8, 1.2], 0.3)
        grad = lml_gradient(fit(data, np.arange(10), hp), data)
        Kn = dense_noisy_kernel(X, hp)
        from reference import dense_kernel

        expected = -np.trace(np.linalg.inv(Kn) @ dense_kernel(X, hp))
        assert grad[0] == pytest.approx(expected, rel=1e-9)
        assert grad[0] <= 0

    def test_scalar_noise_gradient(self):
        data = Dataset([[0.0]], [0.0])
        grad = lml_gradient(fit(data, [0], unit_hp()), data)
        assert grad[-1] == pytest.approx(-0.5, rel=1e-14)


class TestPredict:
    def test_prior_reversion_far_from_data(self):
        data, hp = random_problem(16, 1, seed=7)
        state = fit(data, np.arange(16), hp)
        g = predict(state, data, np.array([500.0]))
        assert abs(g.mean) < 1e-12
        assert g.variance == pytest.approx(hp.sigma_f**2, rel=1e-12)

    def test_interpolates_training_targets_at_low_noise(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(0, 1, size=(12, 1))
        y = np.cos(3 * X[:, 0])
        data = Dataset(X, y)
        hp = Hyperparameters(1.0, [0.5], 1e-4)
        state = fit(data, np.arange(12), hp)
        g = predict(state, data, X[4])
        assert abs(g.mean - y[4]) < 1e-3

    def test_matches_dense_formulas(self):
        data, hp = random_problem(32, 2, seed=9)
        state = fit(data, np.arange(32), hp)
        rng = np.random.default_rng(10)
        for _ in range(5):
            x_star = rng.uniform(-1, 1, size=2)
            g = predict(state, data, x_star)
            mean, var = dense_predict(data.X, data.y, hp, x_star)
            assert g.mean == pytest.approx(mean, rel=1e-10, abs=1e-10)
            assert g.variance == pytest.approx(var, rel=1e-10, abs=1e-10)

    def test_variance_bounds(self):
        data, hp = random_problem(40, 1, seed=11, sigma_eps=0.05)
        state = fit(data, np.arange(40), hp)
        rng = np.random.default_rng(12)
        floor = VARIANCE_FLOOR * hp.sigma_f**2
        for _ in range(30):
            g = predict(state, data, rng.uniform(-1, 1, size=1))
            assert floor <= g.variance <= hp.sigma_f**2

    def test_single_row_batch_is_bitwise_scalar(self):
        data, hp = random_problem(24, 2, seed=13)
        state = fit(data, np.arange(24), hp)
        x_star = np.array([0.1, -0.7])
        means, variances = predict_batch(state, data, x_star[None, :])
        g = predict(state, data, x_star)
        assert g.mean == means[0] and g.variance == variances[0]

    def test_batch_matches_scalar(self):
        # blocked BLAS solves may reassociate, so agreement is to rounding
        data, hp = random_problem(24, 2, seed=13)
        state = fit(data, np.arange(24), hp)
        rng = np.random.default_rng(14)
        Q = rng.uniform(-1, 1, size=(6, 2))
        means, variances = predict_batch(state, data, Q)
        for i in range(6):
            g = predict(state, data, Q[i])
            assert g.mean == pytest.approx(means[i], rel=1e-13, abs=1e-15)
            assert g.variance == pytest.approx(variances[i], rel=1e-13, abs=1e-15)

    def test_dimension_mismatch(self):
        data, hp = random_problem(8, 2, seed=15)
        state = fit(data, np.arange(8), hp)
        with pytest.raises(DimensionError):
            predict(state, data, np.zeros(3))


class TestRoundTripAgainstDenseFormulas:
    @pytest.mark.parametrize("p", [1, 7, 64, 256])
    def test_lml_and_predictions(self, p):
        data, hp = random_problem(p, 2, seed=100 + p)
        state = fit(data, np.arange(p), hp)
        assert log_marginal_likelihood(state, data) == pytest.approx(
            dense_lml(data.X, data.y, hp), rel=1e-8, abs=1e-8
        )
        x_star = np.array([0.25, -0.4])
        g = predict(state, data, x_star)
        mean, var = dense_predict(data.X, data.y, hp, x_star)
        assert g.mean == pytest.approx(mean, rel=1e-8, abs=1e-10)
        assert g.variance == pytest.approx(var, rel=1e-8, abs=1e-10)
