import numpy as np
import pytest

from soundmark.gp import (
    GpModel,
    KernelParams,
    NotPositiveDefiniteError,
    default_init,
    fit,
    kernel,
    kernel_matrix,
    log_density,
    log_marginal_likelihood,
    predict,
)


def gp_dataset(seed, n=30, theta=1.5, gamma=5.0, noise=0.05, room=(30.0, 12.0)):
    """Locations in a room and targets drawn from the GP prior itself."""
    rng = np.random.default_rng(seed)
    x = rng.uniform([0, 0], room, size=(n, 2))
    params = KernelParams(theta, gamma, noise)
    cov = kernel_matrix(x, x, params) + noise * np.eye(n)
    y = rng.multivariate_normal(np.zeros(n), cov) + rng.uniform(-2, 2)
    return x, y


class TestKernel:
    def test_zero_distance_gives_theta(self):
        p = KernelParams(2.3, 4.0, 0.1)
        assert kernel([1.0, 2.0], [1.0, 2.0], p) == pytest.approx(2.3)

    def test_symmetry(self):
        p = KernelParams(1.0, 3.0, 0.1)
        a, b = np.array([0.0, 1.0]), np.array([5.0, -2.0])
        assert kernel(a, b, p) == kernel(b, a, p)

    def test_closed_form(self):
        p = KernelParams(2.0, 3.0, 0.1)
        assert kernel([0.0, 0.0], [3.0, 0.0], p) == pytest.approx(
            2.0 * np.exp(-0.5), rel=1e-9
        )

    def test_matrix_symmetric_and_pd_after_jitter(self):
        x, _ = gp_dataset(0)
        p = KernelParams(1.0, 5.0, 1e-12)
        k = kernel_matrix(x, x, p)
        np.testing.assert_allclose(k, k.T, rtol=0, atol=0)
        # duplicate rows force rank deficiency; fit-level jitter must cope
        xdup = np.vstack([x, x[:1]])
        ydup = np.zeros(len(xdup))
        ydup[0] = 1.0
        model = fit(xdup, ydup, n_iter=2)
        assert np.all(np.isfinite(model.alpha))

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            KernelParams(0.0, 3.0, 0.1)
        with pytest.raises(ValueError):
            KernelParams(1.0, -1.0, 0.1)


class TestGradient:
    def test_matches_central_differences(self):
        # independent finite-difference oracle, step 1e-5
        step = 1e-5
        rng = np.random.default_rng(42)
        for trial in range(10):
            x, y = gp_dataset(100 + trial, n=25)
            y = y - y.mean()
            params = KernelParams(
                float(rng.uniform(0.5, 3.0)),
                float(rng.uniform(3.0, 10.0)),
                float(rng.uniform(0.05, 0.5)),
            )
            _, grad = log_marginal_likelihood(x, y, params, with_grad=True)
            fd = np.empty(3)
            for i, name in enumerate(["theta", "gamma", "noise_var"]):
                hi = {k: getattr(params, k) for k in ["theta", "gamma", "noise_var"]}
                lo = dict(hi)
                hi[name] += step
                lo[name] -= step
                fd[i] = (
                    log_marginal_likelihood(x, y, KernelParams(**hi))
                    - log_marginal_likelihood(x, y, KernelParams(**lo))
                ) / (2 * step)
            assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


class TestFit:
    def test_constant_targets_predict_constant(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 20, size=(12, 2))
        model = fit(x, np.full(12, 4.2))
        mean, _ = predict(model, np.array([[3.0, 3.0], [15.0, 9.0], [-5.0, 2.0]]))
        np.testing.assert_allclose(mean, 4.2, atol=1e-6)

    def test_likelihood_never_below_init(self):
        for seed in range(5):
            x, y = gp_dataset(200 + seed, n=40)
            y_c = y - y.mean()
            init = default_init(y_c)
            model = fit(x, y)
            assert log_marginal_likelihood(x, y_c, model.params) >= log_marginal_likelihood(
                x, y_c, init
            ) - 1e-9

    def test_recovers_length_scale(self):
        rng = np.random.default_rng(7)
        x = rng.uniform([0, 0], [30, 12], size=(100, 2))
        true = KernelParams(1.0, 5.0, 0.01)
        cov = kernel_matrix(x, x, true) + true.noise_var * np.eye(100)
        y = rng.multivariate_normal(np.zeros(100), cov)
        model = fit(x, y)
        assert 3.0 <= model.params.gamma <= 8.0

    def test_gamma_respects_floor(self):
        # data with very short correlation: gamma must stop at the floor
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 30, size=(40, 2))
        y = rng.standard_normal(40)
        model = fit(x, y)
        assert model.params.gamma >= 3.0

    def test_too_few_points_raises(self):
        with pytest.raises(ValueError):
            fit(np.zeros((1, 2)), np.zeros(1))


class TestPredict:
    def test_interpolates_training_points_at_low_noise(self):
        x, y = gp_dataset(300, n=20, noise=1e-9)
        init = KernelParams(float(np.var(y - y.mean())) + 0.1, 5.0, 1e-9)
        model = fit(x, y, init=init, n_iter=0)
        for i in range(5):
            mean, _ = predict(model, x[i])
            assert mean == pytest.approx(y[i], abs=1e-3)

    def test_far_field_reverts_to_mean(self):
        x, y = gp_dataset(301, n=20)
        model = fit(x, y)
        mean, var = predict(model, np.array([1e4, 1e4]))
        assert mean == pytest.approx(model.target_mean, rel=1e-6)
        assert var == pytest.approx(model.params.theta + model.params.noise_var, rel=1e-6)

    def test_matches_dense_solve_oracle(self):
        # independent linear-algebra path: explicit matrix inverse
        x, y = gp_dataset(302, n=35)
        model = fit(x, y)
        p = model.params
        c = kernel_matrix(x, x, p) + p.noise_var * np.eye(len(y))
        c_inv = np.linalg.inv(c)
        y_c = y - model.target_mean
        rng = np.random.default_rng(5)
        queries = rng.uniform([0, 0], [30, 12], size=(20, 2))
        mean, var = predict(model, queries)
        for j, q in enumerate(queries):
            kstar = kernel_matrix(x, q[None, :], p)[:, 0]
            mean_oracle = model.target_mean + kstar @ c_inv @ y_c
            var_oracle = p.theta + p.noise_var - kstar @ c_inv @ kstar
            assert mean[j] == pytest.approx(mean_oracle, rel=1e-8, abs=1e-10)
            assert var[j] == pytest.approx(var_oracle, rel=1e-8)

    def test_variance_bounded(self):
        x, y = gp_dataset(303, n=25)
        model = fit(x, y)
        rng = np.random.default_rng(6)
        _, var = predict(model, rng.uniform([0, 0], [30, 12], size=(50, 2)))
        assert np.all(var > 0)
        assert np.all(var <= model.params.theta + model.params.noise_var + 1e-12)

    def test_translation_invariance(self):
        x, y = gp_dataset(304, n=25)
        offset = np.array([123.4, -56.7])
        model_a = fit(x, y)
        model_b = fit(x + offset, y)
        rng = np.random.default_rng(9)
        queries = rng.uniform([0, 0], [30, 12], size=(10, 2))
        mean_a, var_a = predict(model_a, queries)
        mean_b, var_b = predict(model_b, queries + offset)
        np.testing.assert_allclose(mean_a, mean_b, rtol=1e-9)
        np.testing.assert_allclose(var_a, var_b, rtol=1e-9)


class TestLogDensity:
    @pytest.fixture()
    def model(self):
        x, y = gp_dataset(400, n=20)
        return fit(x, y)

    def test_mode_value(self, model):
        q = np.array([10.0, 5.0])
        mean, var = predict(model, q)
        assert log_density(model, q, mean) == pytest.approx(
            -0.5 * np.log(2 * np.pi * var), rel=1e-12
        )

    def test_one_sigma_value(self, model):
        q = np.array([20.0, 8.0])
        mean, var = predict(model, q)
        mode = -0.5 * np.log(2 * np.pi * var)
        assert log_density(model, q, mean + np.sqrt(var)) == pytest.approx(mode - 0.5)
        assert log_density(model, q, mean - np.sqrt(var)) == pytest.approx(mode - 0.5)

    def test_integrates_to_one(self, model):
        # trapezoid quadrature oracle over mean +/- 8 sigma
        q = np.array([15.0, 6.0])
        mean, var = predict(model, q)
        sd = np.sqrt(var)
        grid = np.linspace(mean - 8 * sd, mean + 8 * sd, 4001)
        dens = np.exp([log_density(model, q, val) for val in grid])
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)
