"""Concrete nonconvex models: a symmetric Gaussian 2-mixture fitted by
stochastic-gradient EM, and logistic regression with the concave penalty
``sum_j theta_j^2 / (1 + theta_j^2)``.  A strongly convex quadratic with a
closed-form sandwich covariance is included for calibration checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh
from scipy.special import expit

from .errors import NonConvergenceError, OracleUnavailableError
from .sgd_core import MiniBatch, ModelOracle


@dataclass(frozen=True)
class OracleCovariance:
    """Hessian ``A``, gradient second moment ``U`` and ``A^{-1} U A^{-1}``."""

    A: np.ndarray
    U: np.ndarray
    sandwich: np.ndarray


def _sandwich(A, U, what):
    A = 0.5 * (A + A.T)
    w = np.linalg.eigvalsh(A)
    if w[0] <= 0:
        raise OracleUnavailableError(
            f"{what} Hessian is not positive definite (min eigenvalue {w[0]:.4g})",
            min_eigenvalue=float(w[0]),
        )
    cf = cho_factor(A)
    left = cho_solve(cf, U)
    S = cho_solve(cf, left.T)
    return OracleCovariance(A, U, 0.5 * (S + S.T))


def _rowdot(thetas, xs):
    # (K, d) x (m, d) -> (K, m); elementwise product then a last-axis sum so
    # that identical rows of ``thetas`` give bit-identical results.
    return (thetas[:, None, :] * xs[None, :, :]).sum(axis=-1)


# --------------------------------------------------------------------------
# Gaussian 2-mixture


def gmm_phi(y, theta, sigma2=1.0) -> float:
    """Posterior weight of the ``+theta`` component, ``1/(1+exp(-2<y,theta>/sigma2))``."""
    return float(expit(2.0 * float(np.dot(y, theta)) / sigma2))


def gmm_stochastic_gradient(model, theta, y, xi=None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    t = float(np.dot(y, theta))
    # 1 - 2 phi = -tanh(t / sigma2)
    g = (theta - np.tanh(t / model.sigma2) * y) / model.sigma2
    if xi is not None:
        g = g + xi
    return g


def _s(t, sigma2):
    # s(t) = int_0^t (1 + exp(-2u/sigma2))^{-1} du
    return 0.5 * sigma2 * (np.logaddexp(0.0, 2.0 * t / sigma2) - np.log(2.0))


def gmm_sample_objective(model, theta, y, xi=None) -> float:
    theta = np.asarray(theta, dtype=float)
    t = float(np.dot(y, theta))
    val = (0.5 * float(theta @ theta) + t - 2.0 * _s(t, model.sigma2)) / model.sigma2
    if xi is not None:
        val += float(np.dot(xi, theta))
    return float(val)


class GmmModel(ModelOracle):
    """Symmetric mixture ``0.5 N(theta_opt, s2 I) + 0.5 N(-theta_opt, s2 I)``.

    A sample is ``z = (y, xi)`` of length ``2d``; ``xi ~ N(0, sigma_xi2 I)`` is
    the optional disturbance added to each stochastic gradient.
    """

    def __init__(self, theta_opt, sigma2=1.0, sigma_xi2=0.0):
        self.theta_opt = np.asarray(theta_opt, dtype=float)
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if sigma_xi2 < 0:
            raise ValueError("sigma_xi2 must be nonnegative")
        self.sigma2 = float(sigma2)
        self.sigma_xi2 = float(sigma_xi2)
        self.d = self.theta_opt.shape[0]

    @classmethod
    def from_signal(cls, d, s, sigma2=1.0, sigma_xi2=0.0):
        theta = np.zeros(d)
        theta[0] = s
        return cls(theta, sigma2, sigma_xi2)

    def local_minima(self):
        return [self.theta_opt.copy(), -self.theta_opt]

    def sample_y(self, rng, size=None):
        shape = () if size is None else tuple(np.atleast_1d(size))
        signs = 2.0 * rng.integers(0, 2, size=shape) - 1.0
        noise = rng.standard_normal(shape + (self.d,))
        return np.asarray(signs)[..., None] * self.theta_opt + np.sqrt(self.sigma2) * noise

    def sample(self, rng):
        y = self.sample_y(rng)
        xi = np.sqrt(self.sigma_xi2) * rng.standard_normal(self.d) if self.sigma_xi2 > 0 else np.zeros(self.d)
        return np.concatenate([y, xi])

    def sample_batches(self, rng, N, m):
        y = self.sample_y(rng, (N, m))
        if self.sigma_xi2 > 0:
            xi = np.sqrt(self.sigma_xi2) * rng.standard_normal((N, m, self.d))
        else:
            xi = np.zeros((N, m, self.d))
        return np.ascontiguousarray(np.concatenate([y, xi], axis=-1))

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        return z[..., : self.d], z[..., self.d :]

    def gradient(self, theta, z):
        y, xi = self._split(z)
        return gmm_stochastic_gradient(self, theta, y, xi)

    def objective(self, theta, z):
        y, xi = self._split(z)
        return gmm_sample_objective(self, theta, y, xi)

    def stacked_gradient(self, thetas, batch):
        Y, Xi = self._split(batch.samples if isinstance(batch, MiniBatch) else batch)
        thetas = np.asarray(thetas, dtype=float)
        coef = np.tanh(_rowdot(thetas, Y) / self.sigma2)
        G = (thetas[:, None, :] - coef[:, :, None] * Y[None, :, :]) / self.sigma2 + Xi[None]
        return G.sum(axis=1) / Y.shape[0]

    def minibatch_gradient(self, theta, batch):
        return self.stacked_gradient(np.asarray(theta, dtype=float)[None, :], batch)[0]

    def kernel_spec(self):
        return "gmm", {"sigma2": self.sigma2}


def gmm_sample(model: GmmModel, rng) -> np.ndarray:
    """One draw ``y`` from the mixture (no disturbance)."""
    return model.sample_y(rng)


def _mc_chunks(n_mc, chunk=200_000):
    done = 0
    while done < n_mc:
        k = min(chunk, n_mc - done)
        yield k
        done += k


def gmm_population_hessian(model: GmmModel, theta, n_mc=1_000_000, rng=None, return_se=False):
    """Monte-Carlo estimate of ``grad^2 F(theta)``.

    ``A = (I - E[y y^T sech^2(<y,theta>/s2)] / s2) / s2``.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    theta = np.asarray(theta, dtype=float)
    d, s2 = model.d, model.sigma2
    acc = np.zeros((d, d))
    acc2 = np.zeros((d, d))
    for k in _mc_chunks(n_mc):
        y = model.sample_y(rng, k)
        w = 1.0 / np.cosh(y @ theta / s2) ** 2
        terms = (y[:, :, None] * y[:, None, :]) * w[:, None, None]
        acc += terms.sum(axis=0)
        if return_se:
            acc2 += (terms**2).sum(axis=0)
    mean = acc / n_mc
    A = (np.eye(d) - mean / s2) / s2
    A = 0.5 * (A + A.T)
    if not return_se:
        return A
    var = np.maximum(acc2 / n_mc - mean**2, 0.0) / n_mc
    return A, np.sqrt(var) / s2**2


def gmm_oracle_covariance(model: GmmModel, m=1, n_mc=1_000_000, rng=None) -> OracleCovariance:
    """Sandwich covariance at ``theta_opt`` for mean-of-``m`` mini-batches."""
    rng = np.random.default_rng() if rng is None else rng
    theta = model.theta_opt
    d, s2 = model.d, model.sigma2
    A = gmm_population_hessian(model, theta, n_mc, rng)
    acc = np.zeros((d, d))
    for k in _mc_chunks(n_mc):
        y = model.sample_y(rng, k)
        v = theta[None, :] - np.tanh(y @ theta / s2)[:, None] * y
        acc += v.T @ v
    U_single = acc / n_mc / s2**2 + model.sigma_xi2 * np.eye(d)
    U_single = 0.5 * (U_single + U_single.T)
    return _sandwich(A, U_single / m, "mixture")


# --------------------------------------------------------------------------
# Regularised logistic regression on a fixed design


class LogisticModel(ModelOracle):
    """``F_M(theta) = mean_i log(1 + exp(-y_i x_i^T theta)) + lam * R(theta)``.

    Samples are row indices drawn uniformly with replacement.
    """

    def __init__(self, X, y, lam=0.0, meta=None):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ValueError("X must be a nonempty 2-d array")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y must have one label per row of X")
        if not np.all(np.abs(self.y) == 1.0):
            raise ValueError("labels must be +1 or -1")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.lam = float(lam)
        self.M, self.d = self.X.shape
        self.meta = dict(meta or {})

    def with_lambda(self, lam):
        return LogisticModel(self.X, self.y, lam, self.meta)

    def sample(self, rng):
        return int(rng.integers(self.M))

    def sample_batches(self, rng, N, m):
        return rng.integers(0, self.M, size=(N, m))

    def _reg_grad(self, theta):
        return 2.0 * self.lam * theta / (1.0 + theta**2) ** 2

    def objective(self, theta, i):
        theta = np.asarray(theta, dtype=float)
        u = self.y[i] * float(self.X[i] @ theta)
        return float(np.logaddexp(0.0, -u) + self.lam * np.sum(theta**2 / (1.0 + theta**2)))

    def gradient(self, theta, i):
        i = int(i)
        if not 0 <= i < self.M:
            raise IndexError(f"sample index {i} out of range [0, {self.M})")
        theta = np.asarray(theta, dtype=float)
        u = self.y[i] * float(self.X[i] @ theta)
        return -self.y[i] * expit(-u) * self.X[i] + self._reg_grad(theta)

    def stacked_gradient(self, thetas, batch):
        idx = np.asarray(batch.samples if isinstance(batch, MiniBatch) else batch)
        thetas = np.asarray(thetas, dtype=float)
        Xb, yb = self.X[idx], self.y[idx]
        c = -yb[None, :] * expit(-yb[None, :] * _rowdot(thetas, Xb))
        data = (c[:, :, None] * Xb[None, :, :]).sum(axis=1) / idx.shape[0]
        return data + self._reg_grad(thetas)

    def minibatch_gradient(self, theta, batch):
        return self.stacked_gradient(np.asarray(theta, dtype=float)[None, :], batch)[0]

    def full_objective(self, theta):
        theta = np.asarray(theta, dtype=float)
        u = self.y * (self.X @ theta)
        return float(np.mean(np.logaddexp(0.0, -u)) + self.lam * np.sum(theta**2 / (1.0 + theta**2)))

    def full_gradient(self, theta):
        theta = np.asarray(theta, dtype=float)
        u = self.y * (self.X @ theta)
        return self.X.T @ (-self.y * expit(-u)) / self.M + self._reg_grad(theta)

    def hessian(self, theta):
        theta = np.asarray(theta, dtype=float)
        u = self.y * (self.X @ theta)
        w = expit(u) * expit(-u)
        H = (self.X * w[:, None]).T @ self.X / self.M
        t2 = theta**2
        H += np.diag(2.0 * self.lam * (1.0 / (1.0 + t2) ** 2 - 4.0 * t2 / (1.0 + t2) ** 3))
        return 0.5 * (H + H.T)

    def kernel_spec(self):
        return "logistic", {"X": self.X, "y": self.y, "lam": self.lam}

    # snapshot ----------------------------------------------------------------
    def to_dict(self):
        return {
            "format": "sgdinfer.logistic-dataset/1",
            "M": self.M,
            "d": self.d,
            "X": self.X.tolist(),
            "y": self.y.astype(int).tolist(),
            "lam": self.lam,
            **{k: v for k, v in self.meta.items() if k not in ("M", "d", "X", "y", "lam")},
        }

    @classmethod
    def from_dict(cls, doc):
        X = np.asarray(doc["X"], dtype=float).reshape(doc["M"], doc["d"])
        meta = {k: v for k, v in doc.items() if k not in ("format", "M", "d", "X", "y", "lam")}
        return cls(X, np.asarray(doc["y"], dtype=float), doc.get("lam", 0.0), meta)


def save_dataset(model: LogisticModel, path):
    # repr round-trips doubles exactly
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_dataset(path) -> LogisticModel:
    with open(path) as fh:
        return LogisticModel.from_dict(json.load(fh))


def toeplitz_cov(d, rho) -> np.ndarray:
    if not abs(rho) < 1:
        raise ValueError("|rho| must be < 1")
    idx = np.arange(d)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def logistic_generate_data(d, M, theta_s, Sigma_X, rng, lam=0.0, meta=None) -> LogisticModel:
    theta_s = np.asarray(theta_s, dtype=float)
    Sigma_X = np.asarray(Sigma_X, dtype=float)
    w, V = eigh(Sigma_X)
    if w[0] <= 0:
        raise ValueError(f"Sigma_X is not positive definite (min eigenvalue {w[0]:.4g})")
    root = (V * np.sqrt(w)) @ V.T
    X = rng.standard_normal((M, d)) @ root
    p_plus = expit(X @ theta_s)
    y = np.where(rng.random(M) < p_plus, 1.0, -1.0)
    info = {"theta_s": theta_s.tolist()}
    info.update(meta or {})
    return LogisticModel(X, y, lam, info)


def logistic_single_gradient(model, theta, i):
    return model.gradient(theta, i)


def logistic_full_gradient(model, theta):
    return model.full_gradient(theta)


def logistic_hessian(model, theta):
    return model.hessian(theta)


def logistic_find_optimum(model, init=None, step=0.5, tol=1e-10, max_iter=1_000_000, trace=None):
    """Fixed-step gradient descent until ``||grad F_M|| <= tol``."""
    if not step > 0:
        raise ValueError("step must be positive")
    if init is None:
        init = model.meta.get("theta_s", np.zeros(model.d))
    theta = np.array(init, dtype=float)
    for _ in range(max_iter):
        g = model.full_gradient(theta)
        if trace is not None:
            trace.append(theta.copy())
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return theta
        theta = theta - step * g
    gn = float(np.linalg.norm(model.full_gradient(theta)))
    raise NonConvergenceError(f"gradient descent stopped at ||grad||={gn:.3e} after {max_iter} steps", gn)


def logistic_oracle_covariance(model, theta_opt, m=1) -> OracleCovariance:
    theta_opt = np.asarray(theta_opt, dtype=float)
    gn = float(np.linalg.norm(model.full_gradient(theta_opt)))
    if gn > 1e-8:
        raise ValueError(f"theta_opt is not stationary (||grad||={gn:.3e})")
    u = model.y * (model.X @ theta_opt)
    G = (-model.y * expit(-u))[:, None] * model.X + model._reg_grad(theta_opt)
    U_single = G.T @ G / model.M
    return _sandwich(model.hessian(theta_opt), U_single / m, "logistic")


# --------------------------------------------------------------------------
# Strongly convex quadratic


class QuadraticModel(ModelOracle):
    """``f(theta; y) = theta^T A theta / 2 - y^T theta`` with ``y ~ N(A c, S)``.

    The minimiser is ``c`` and the sandwich covariance is ``A^{-1} S A^{-1}``.
    """

    def __init__(self, A, center=None, noise_cov=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.d = self.A.shape[0]
        self.center = np.zeros(self.d) if center is None else np.asarray(center, dtype=float)
        self.noise_cov = np.zeros((self.d, self.d)) if noise_cov is None else np.atleast_2d(np.asarray(noise_cov, dtype=float))
        w, V = eigh(self.noise_cov)
        self._root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        self._mean = self.A @ self.center

    def local_minima(self):
        return [self.center.copy()]

    def sample(self, rng):
        return self._mean + self._root @ rng.standard_normal(self.d)

    def sample_batches(self, rng, N, m):
        return self._mean + rng.standard_normal((N, m, self.d)) @ self._root

    def objective(self, theta, y):
        theta = np.asarray(theta, dtype=float)
        return float(0.5 * theta @ self.A @ theta - np.dot(y, theta))

    def gradient(self, theta, y):
        return self.A @ np.asarray(theta, dtype=float) - y

    def stacked_gradient(self, thetas, batch):
        Y = np.asarray(batch.samples if isinstance(batch, MiniBatch) else batch, dtype=float)
        AT = (thetas[:, None, :] * self.A[None, :, :]).sum(axis=-1)
        return AT - Y.sum(axis=0) / Y.shape[0]

    def minibatch_gradient(self, theta, batch):
        return self.stacked_gradient(np.asarray(theta, dtype=float)[None, :], batch)[0]

    def oracle_covariance(self, m=1) -> OracleCovariance:
        return _sandwich(self.A, self.noise_cov / m, "quadratic")


# --------------------------------------------------------------------------


def finite_diff_check(objective, gradient, theta, h=1e-5) -> float:
    """Max relative gap between central differences and the analytic gradient."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(gradient(theta), dtype=float)
    fd = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        fd[j] = (objective(theta + e) - objective(theta - e)) / (2 * h)
    scale = max(float(np.max(np.abs(g))), float(np.max(np.abs(fd))), 1e-8)
    return float(np.max(np.abs(fd - g)) / scale)
