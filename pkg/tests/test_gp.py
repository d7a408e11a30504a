"""Tests for GP regression: kernel, likelihood, gradient, training, prediction."""

import numpy as np
import pytest

from anovagp.exceptions import TrainingFailedError
from anovagp.gp import (GpTrainConfig, Hyperparameters, kernel, nlml,
                        nlml_gradient, predict, predict_batch, train_gp)


def make_hyper(sq_lengths, signal_var, jitter_var):
    log_jit = np.log(jitter_var) if jitter_var > 0 else -np.inf
    return Hyperparameters(np.log(np.asarray(sq_lengths, dtype=float)),
                           float(np.log(signal_var)), float(log_jit))


class TestKernel:
    def test_same_point(self):
        h = make_hyper([1.0, 2.0], 1.5, 0.25)
        x = np.array([0.3, 0.7])
        assert np.isclose(kernel(x, x, h), 1.5 + 0.25)

    def test_unit_distance(self):
        h = make_hyper([1.0], 1.0, 0.0)
        assert np.isclose(kernel(np.array([0.0]), np.array([np.sqrt(2.0)]), h),
                          np.exp(-1.0))

    def test_zero_signal(self):
        h = make_hyper([1.0], 1e-300, 0.5)
        x, y = np.array([0.1]), np.array([0.2])
        assert kernel(x, y, h) < 1e-200
        assert np.isclose(kernel(x, x, h), 0.5)

    def test_symmetry(self):
        h = make_hyper([0.5, 2.0, 1.0], 1.2, 0.1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x, y = rng.standard_normal(3), rng.standard_normal(3)
            assert kernel(x, y, h) == kernel(y, x, h)

    def test_dimension_mismatch(self):
        h = make_hyper([1.0, 1.0], 1.0, 0.0)
        with pytest.raises(ValueError):
            kernel(np.zeros(3), np.zeros(3), h)


class TestNlml:
    def test_single_point_zero_target(self):
        h = make_hyper([1.0], 1.0, 0.0)
        value = nlml(h, np.zeros((1, 1)), np.zeros(1))
        assert np.isclose(value, 0.5 * np.log(2 * np.pi))

    def test_single_point_nonzero_target(self):
        h = make_hyper([1.0], 1.0, 0.0)
        y = 1.7
        value = nlml(h, np.zeros((1, 1)), np.array([y]))
        assert np.isclose(value, 0.5 * np.log(2 * np.pi) + 0.5 * y ** 2)

    def test_two_point_brute_force(self):
        h = make_hyper([0.8], 1.3, 0.05)
        X = np.array([[0.0], [0.6]])
        y = np.array([0.4, -1.1])
        k01 = 1.3 * np.exp(-0.5 * 0.36 / 0.8)
        C = np.array([[1.35, k01], [k01, 1.35]])
        expected = (0.5 * np.log(np.linalg.det(C))
                    + 0.5 * y @ np.linalg.solve(C, y)
                    + np.log(2 * np.pi))
        assert np.isclose(nlml(h, X, y), expected, rtol=1e-12)


class TestGradient:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.integers(1, 5)
        n = rng.integers(2, 21)
        X = rng.uniform(-1, 1, (n, m))
        y = rng.standard_normal(n)
        theta = np.concatenate([rng.uniform(-1.5, 1.5, m),
                                rng.uniform(-1, 1, 1),
                                rng.uniform(-6, -2, 1)])
        h = Hyperparameters(theta[:m], theta[m], theta[m + 1])
        grad = nlml_gradient(h, X, y)
        eps = 1e-6
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += eps
            tm[i] -= eps
            fp = nlml(Hyperparameters(tp[:m], tp[m], tp[m + 1]), X, y)
            fm = nlml(Hyperparameters(tm[:m], tm[m], tm[m + 1]), X, y)
            fd = (fp - fm) / (2 * eps)
            assert abs(grad[i] - fd) <= 1e-5 * max(abs(fd), 1.0)

    def test_zero_targets_signal_gradient_positive(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(0, 1, (8, 2))
        h = make_hyper([0.5, 0.5], 1.0, 1e-4)
        grad = nlml_gradient(h, X, np.zeros(8))
        assert grad[2] > 0.0

    def test_scalar_closed_form(self):
        # N=1, M=1, zero jitter: d/dlog(rho1^2) = 1/2 - y^2 / (2 rho1^2)
        y = 0.9
        h = make_hyper([1.0], 2.0, 0.0)
        grad = nlml_gradient(h, np.zeros((1, 1)), np.array([y]))
        assert np.isclose(grad[1], 0.5 - y ** 2 / 4.0)


class TestTraining:
    def test_zero_targets_predict_zero(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, (6, 2))
        model = train_gp(X, np.zeros(6), GpTrainConfig(restarts=2))
        mean, _ = predict(model, np.array([0.4, 0.6]))
        assert abs(mean) < 1e-12

    def test_interpolation_smooth_1d(self):
        X = np.linspace(0, 1, 10)[:, None]
        y = np.sin(3 * X[:, 0])
        model = train_gp(X, y, GpTrainConfig(restarts=3, jitter_floor=0.0))
        for x, t in zip(X, y):
            mean, var = predict(model, x)
            assert abs(mean - t) < 1e-6
            assert var < 1e-6

    def test_duplicate_rows_zero_jitter_fails(self):
        X = np.array([[0.5], [0.5], [0.1]])
        y = np.array([1.0, 2.0, 0.0])
        with pytest.raises(TrainingFailedError):
            train_gp(X, y, GpTrainConfig(restarts=3, jitter_floor=0.0))

    def test_training_never_worse_than_inits(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, (12, 2))
        y = np.cos(4 * X[:, 0]) + X[:, 1]
        cfg = GpTrainConfig(restarts=4, seed=5)
        model = train_gp(X, y, cfg)
        # replay the restart initializations used by train_gp
        spans = X.max(axis=0) - X.min(axis=0)
        var = float(np.var(y))
        gen = np.random.default_rng(cfg.seed)
        for _ in range(cfg.restarts):
            log_ell = gen.uniform(np.log(0.01 * spans ** 2),
                                  np.log(10.0 * spans ** 2))
            log_sig2 = np.log(var) + gen.uniform(-1.0, 1.0)
            h = Hyperparameters(log_ell, float(log_sig2),
                                float(np.log(1e-10 * var)))
            assert model.final_nlml <= nlml(h, X, y) + 1e-9

    def test_warm_start_used(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 1, (8, 1))
        y = np.sin(2 * X[:, 0])
        base = train_gp(X, y, GpTrainConfig(restarts=3, seed=0))
        theta = np.concatenate([base.hyper.log_sq_lengths,
                                [base.hyper.log_signal_var,
                                 base.hyper.log_jitter_var]])
        warm = train_gp(X, y, GpTrainConfig(restarts=1, seed=99,
                                            warm_starts=[theta]))
        assert warm.final_nlml <= base.final_nlml + 1e-8


class TestPredict:
    @pytest.fixture()
    def model(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0, 1, (9, 2))
        y = np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])
        return train_gp(X, y, GpTrainConfig(restarts=3, jitter_floor=0.0))

    def test_interpolates_at_training_points(self, model):
        for x, t in zip(model.inputs, model.targets):
            mean, var = predict(model, x)
            assert abs(mean - t) < 1e-6
            assert var >= 0.0

    def test_single_point_closed_form(self):
        h = make_hyper([0.7], 1.9, 0.0)
        X = np.array([[0.2]])
        a = 1.4
        model = train_gp(X, np.array([a]),
                         GpTrainConfig(restarts=1, jitter_floor=0.0))
        # mean must follow a * k(x, x0) / k(x0, x0) for any trained hyper
        for x in (0.0, 0.5, 1.0):
            mean, _ = predict(model, np.array([x]))
            d2 = (x - 0.2) ** 2
            expected = a * np.exp(-0.5 * d2 / model.hyper.sq_lengths[0])
            assert np.isclose(mean, expected, rtol=1e-10)

    def test_far_field_limits(self, model):
        mean, var = predict(model, np.array([1e3, -1e3]))
        prior = model.hyper.signal_var + model.hyper.jitter_var
        assert abs(mean) < 1e-10
        assert np.isclose(var, prior, rtol=1e-10)

    def test_variance_bounded_by_prior(self, model):
        rng = np.random.default_rng(5)
        prior = model.hyper.signal_var + model.hyper.jitter_var
        for _ in range(20):
            _, var = predict(model, rng.uniform(-1, 2, 2))
            assert -1e-10 <= var <= prior + 1e-10

    def test_permutation_invariance(self, model):
        perm = np.random.default_rng(6).permutation(model.n_train)
        shuffled = train_gp(model.inputs[perm], model.targets[perm],
                            GpTrainConfig(restarts=1, jitter_floor=0.0,
                                          warm_starts=[np.concatenate([
                                              model.hyper.log_sq_lengths,
                                              [model.hyper.log_signal_var]])]))
        x = np.array([0.33, 0.77])
        m1, v1 = predict(model, x)
        # rebuild with identical hyperparameters on permuted data
        from anovagp.gp import GpModel, _kernel_matrix, _pairwise_sqdists
        from scipy.linalg import cho_solve, cholesky
        k, _ = _kernel_matrix(_pairwise_sqdists(model.inputs[perm]),
                              model.hyper.sq_lengths, model.hyper.signal_var,
                              model.hyper.jitter_var)
        low = cholesky(k, lower=True)
        w = cho_solve((low, True), model.targets[perm])
        permuted = GpModel(inputs=model.inputs[perm],
                           targets=model.targets[perm], hyper=model.hyper,
                           chol_lower=low, weights=w, final_nlml=0.0)
        m2, v2 = predict(permuted, x)
        assert np.isclose(m1, m2, atol=1e-10)
        assert np.isclose(v1, v2, atol=1e-10)

    def test_batch_matches_single(self, model):
        rng = np.random.default_rng(7)
        xs = rng.uniform(0, 1, (15, 2))
        means, variances = predict_batch(model, xs)
        for k, x in enumerate(xs):
            m, v = predict(model, x)
            assert np.isclose(means[k], m, atol=1e-12)
            assert np.isclose(variances[k], v, atol=1e-12)

    def test_dimension_mismatch(self, model):
        with pytest.raises(ValueError):
            predict(model, np.zeros(3))
