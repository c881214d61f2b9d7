"""Gaussian-process regression with a scaled RBF kernel.

One GP per landmark maps 2-D locations to that landmark's feature value.
Hyperparameters (variance scale, length scale, observation noise) are fitted
by Adam ascent on the log marginal likelihood through a softplus
reparameterization; the length scale is kept above a floor (3 m for spatial
GPs, to keep the energy field smooth at room scale).  Targets are centered
before fitting and the offset restored in prediction.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

GAMMA_MIN_DEFAULT = 3.0
JITTER_START = 1e-8
JITTER_MAX = 1e-2

ADAM_LR = 0.1
ADAM_ITERS = 100
_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Covariance stayed non-PD even at the maximum jitter level."""


@dataclass(frozen=True)
class KernelParams:
    theta: float       # kernel variance scale
    gamma: float       # length scale (meters for spatial GPs)
    noise_var: float   # observation noise variance

    def __post_init__(self):
        if not (self.theta > 0 and self.gamma > 0 and self.noise_var > 0):
            raise ValueError("kernel parameters must be strictly positive")


@dataclass(frozen=True)
class GpModel:
    params: KernelParams
    train_locations: np.ndarray   # (N, D)
    train_targets: np.ndarray     # (N,) raw, uncentered
    target_mean: float
    chol_lower: np.ndarray        # Cholesky factor of K + noise_var*I (+jitter)
    alpha: np.ndarray             # (K + noise_var*I)^{-1} (targets - mean)

    @property
    def n_train(self):
        return len(self.train_targets)


def kernel(a, b, params):
    """Scaled RBF: theta * exp(-||a-b||^2 / (2 gamma^2))."""
    d2 = np.sum((np.asarray(a, float) - np.asarray(b, float)) ** 2)
    return params.theta * np.exp(-d2 / (2.0 * params.gamma**2))


def _sqdist(xa, xb):
    """Pairwise squared distances, (len(xa), len(xb))."""
    diff = xa[:, None, :] - xb[None, :, :]
    return np.sum(diff**2, axis=2)


def kernel_matrix(xa, xb, params):
    return params.theta * np.exp(-_sqdist(xa, xb) / (2.0 * params.gamma**2))


def _chol_with_jitter(c):
    """Lower Cholesky factor, escalating diagonal jitter until PD."""
    scale = float(np.mean(np.diag(c)))
    factor = 0.0
    while True:
        try:
            return cholesky(c + factor * scale * np.eye(len(c)), lower=True)
        except np.linalg.LinAlgError:
            factor = JITTER_START if factor == 0.0 else factor * 10.0
            if factor > JITTER_MAX:
                raise NotPositiveDefiniteError(
                    "covariance not positive definite at maximum jitter"
                )


def log_marginal_likelihood(locations, targets, params, with_grad=False):
    """Log marginal likelihood of (already centered) targets under the GP.

    With ``with_grad`` also returns the gradient with respect to
    (theta, gamma, noise_var).
    """
    x = np.asarray(locations, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    n = len(y)
    d2 = _sqdist(x, x)
    e = np.exp(-d2 / (2.0 * params.gamma**2))
    k = params.theta * e
    c = k + params.noise_var * np.eye(n)
    low = _chol_with_jitter(c)
    alpha = cho_solve((low, True), y)
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(low))))
        - 0.5 * n * np.log(2.0 * np.pi)
    )
    if not with_grad:
        return lml
    c_inv = cho_solve((low, True), np.eye(n))
    g = np.outer(alpha, alpha) - c_inv
    grad = np.array([
        0.5 * np.sum(g * e),                                # d/d theta
        0.5 * np.sum(g * k * d2) / params.gamma**3,         # d/d gamma
        0.5 * np.trace(g),                                  # d/d noise_var
    ])
    return lml, grad


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    # inverse of log(1 + e^x); y must be positive
    return y + np.log(-np.expm1(-y)) if y > 1e-10 else np.log(np.expm1(y))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def default_init(targets, gamma_min=GAMMA_MIN_DEFAULT, gamma_init=5.0):
    """Initialization: theta = target variance, gamma = 5 m, noise = theta/10."""
    theta0 = max(float(np.var(targets)), 1e-6)
    return KernelParams(theta0, max(gamma_init, gamma_min * 1.01), 0.1 * theta0)


def fit(locations, targets, init=None, lr=ADAM_LR, n_iter=ADAM_ITERS,
        gamma_min=GAMMA_MIN_DEFAULT, seed=0):
    """Fit GP hyperparameters by Adam on the log marginal likelihood.

    The optimization runs in an unconstrained space (softplus for theta and
    noise_var, shifted softplus keeping gamma above ``gamma_min``); if the
    final likelihood is below the initial one the initial parameters are
    kept, so the returned model is never worse than its initialization.
    ``seed`` is accepted for interface uniformity; the fit is deterministic.
    """
    x = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("locations and targets length mismatch")
    if len(y) < 2:
        raise ValueError("need at least 2 training points")
    offset = float(np.mean(y))
    y_c = y - offset
    if init is None:
        init = default_init(y_c, gamma_min=gamma_min)
    if init.gamma <= gamma_min:
        raise ValueError(f"initial gamma must exceed gamma_min={gamma_min}")

    z = np.array([
        _softplus_inv(init.theta),
        _softplus_inv(init.gamma - gamma_min),
        _softplus_inv(init.noise_var),
    ])

    def unpack(z):
        return KernelParams(
            float(_softplus(z[0])),
            float(gamma_min + _softplus(z[1])),
            float(_softplus(z[2])),
        )

    lml_init = log_marginal_likelihood(x, y_c, init)
    m = np.zeros(3)
    v = np.zeros(3)
    for t in range(1, n_iter + 1):
        params = unpack(z)
        _, grad = log_marginal_likelihood(x, y_c, params, with_grad=True)
        grad_z = grad * _sigmoid(z)  # chain rule through softplus
        m = _ADAM_B1 * m + (1 - _ADAM_B1) * grad_z
        v = _ADAM_B2 * v + (1 - _ADAM_B2) * grad_z**2
        m_hat = m / (1 - _ADAM_B1**t)
        v_hat = v / (1 - _ADAM_B2**t)
        z = z + lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)  # ascent

    params = unpack(z)
    if log_marginal_likelihood(x, y_c, params) < lml_init:
        params = init

    c = kernel_matrix(x, x, params) + params.noise_var * np.eye(len(y))
    low = _chol_with_jitter(c)
    alpha = cho_solve((low, True), y_c)
    return GpModel(params, x, y, offset, low, alpha)


def predict(model, x):
    """Predictive mean and variance at query location(s).

    A single location returns floats; an (M, D) array returns arrays.
    The variance is for a new observation, so it includes the noise term.
    """
    single = np.asarray(x).ndim == 1
    xq = np.atleast_2d(np.asarray(x, dtype=np.float64))
    kstar = kernel_matrix(model.train_locations, xq, model.params)  # (N, M)
    mean = model.target_mean + kstar.T @ model.alpha
    w = solve_triangular(model.chol_lower, kstar, lower=True)
    var = model.params.theta + model.params.noise_var - np.sum(w**2, axis=0)
    var = np.maximum(var, 1e-15 * (model.params.theta + model.params.noise_var))
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_density(model, x, value):
    """Log predictive density of observing ``value`` at location ``x``."""
    mean, var = predict(model, x)
    return -0.5 * (np.log(2.0 * np.pi * var) + (value - mean) ** 2 / var)
