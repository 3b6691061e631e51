"""Target densities with exact gradients and Hessians.

Every target evaluates on a single point ``x`` of shape ``(d,)`` or on a
batch of shape ``(n, d)``; the return shapes follow the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp

LOG_2PI = np.log(2.0 * np.pi)


class TargetDensity:
    """Base class: subclasses implement ``_evaluate`` on 2-D batches."""

    dim: int
    normalized: bool = False

    def _evaluate(self, X: np.ndarray, order: int):
        raise NotImplementedError

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return X, single

    def log_density(self, x):
        X, single = self._as_batch(x)
        (lp,) = self._evaluate(X, 0)
        return lp[0] if single else lp

    def grad(self, x):
        X, single = self._as_batch(x)
        lp, g = self._evaluate(X, 1)
        return g[0] if single else g

    def value_and_grad(self, x):
        X, single = self._as_batch(x)
        lp, g = self._evaluate(X, 1)
        return (lp[0], g[0]) if single else (lp, g)

    def grad_hess(self, x):
        """Return ``(log pi, grad log pi, hessian log pi)``."""
        X, single = self._as_batch(x)
        lp, g, H = self._evaluate(X, 2)
        return (lp[0], g[0], H[0]) if single else (lp, g, H)

    def hess(self, x):
        return self.grad_hess(x)[2]


class GaussianTarget(TargetDensity):
    """Multivariate normal N(mean, cov); used for sanity checks."""

    normalized = True

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.dim = self.mean.size
        self.precision = np.linalg.inv(self.cov)
        self.precision = 0.5 * (self.precision + self.precision.T)
        _, logdet = np.linalg.slogdet(self.cov)
        self._const = -0.5 * (self.dim * LOG_2PI + logdet)

    def _evaluate(self, X, order):
        D = X - self.mean
        PD = D @ self.precision
        lp = self._const - 0.5 * np.einsum("ni,ni->n", D, PD)
        if order == 0:
            return (lp,)
        if order == 1:
            return lp, -PD
        H = np.broadcast_to(-self.precision, (X.shape[0], self.dim, self.dim)).copy()
        return lp, -PD, H

    def mode(self):
        return self.mean.copy()

    def sample(self, n, rng):
        L = np.linalg.cholesky(self.cov)
        return self.mean + rng.standard_normal((n, self.dim)) @ L.T


@dataclass
class WarpedGaussianComponent(TargetDensity):
    """Banana-shaped Gaussian shifted to (s1, s2).

    With y ~ N(0, diag(a^2, 1, ..., 1)) the variable is
    x1 = y1 + s1, x2 = y2 - b (y1^2 - a^2) + s2, x_i = y_i for i >= 3.
    The map has unit Jacobian determinant, so the density is normalized.
    """

    a: float
    b: float
    s1: float
    s2: float
    dim: int
    normalized: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.dim < 2:
            raise ValueError("warped Gaussian needs dim >= 2")
        self._const = -0.5 * self.dim * LOG_2PI - np.log(self.a)

    def unwarp(self, X):
        """Map points x to the underlying Gaussian coordinates y."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X.copy()
        z1 = X[:, 0] - self.s1
        Y[:, 0] = z1
        Y[:, 1] = X[:, 1] + self.b * (z1 ** 2 - self.a ** 2) - self.s2
        return Y

    def warp(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        X = Y.copy()
        X[:, 0] = Y[:, 0] + self.s1
        X[:, 1] = Y[:, 1] - self.b * (Y[:, 0] ** 2 - self.a ** 2) + self.s2
        return X

    def sample(self, n, rng):
        Y = rng.standard_normal((n, self.dim))
        Y[:, 0] *= self.a
        return self.warp(Y)

    def mode(self):
        m = np.zeros(self.dim)
        m[0] = self.s1
        m[1] = self.s2 + self.b * self.a ** 2
        return m

    def _evaluate(self, X, order):
        a2 = self.a ** 2
        z1 = X[:, 0] - self.s1
        u = X[:, 1] + self.b * (z1 ** 2 - a2) - self.s2
        rest = X[:, 2:]
        lp = self._const - 0.5 * (z1 ** 2 / a2 + u ** 2 + np.einsum("ni,ni->n", rest, rest))
        if order == 0:
            return (lp,)
        g = np.empty_like(X)
        g[:, 0] = -z1 / a2 - 2.0 * self.b * z1 * u
        g[:, 1] = -u
        g[:, 2:] = -rest
        if order == 1:
            return lp, g
        n, d = X.shape
        H = np.zeros((n, d, d))
        idx = np.arange(d)
        H[:, idx, idx] = -1.0
        # the a^2 inside the bracket is the same a^2 that appears in the gradient
        H[:, 0, 0] = -1.0 / a2 - 2.0 * self.b * u - 4.0 * self.b ** 2 * z1 ** 2
        H[:, 0, 1] = H[:, 1, 0] = -2.0 * self.b * z1
        return lp, g, H


def warped_log_density(component: WarpedGaussianComponent, x):
    return component.log_density(x)


class MixtureTarget(TargetDensity):
    """Weighted mixture of target densities, evaluated in log space."""

    def __init__(self, components: Sequence[TargetDensity], weights):
        weights = np.asarray(weights, dtype=float)
        if len(components) < 1 or len(components) != weights.size:
            raise ValueError("need one weight per component and at least one component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("components disagree on dimension")
        self.components = list(components)
        self.weights = weights
        self.dim = dims.pop()
        self.normalized = all(c.normalized for c in components)
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(weights)

    def _evaluate(self, X, order):
        parts = [c._evaluate(X, order) for c in self.components]
        L = np.stack([p[0] for p in parts], axis=1) + self.log_weights  # (n, r)
        with np.errstate(invalid="ignore"):
            lp = logsumexp(L, axis=1)
        if order == 0:
            return (lp,)
        with np.errstate(invalid="ignore"):
            resp = np.exp(L - lp[:, None])  # NaN rows where everything underflowed
        G = np.stack([p[1] for p in parts], axis=1)  # (n, r, d)
        g = np.einsum("nr,nrd->nd", resp, G)
        if order == 1:
            return lp, g
        Hs = np.stack([p[2] for p in parts], axis=1)
        H = np.einsum("nr,nrij->nij", resp, Hs + G[:, :, :, None] * G[:, :, None, :])
        H -= g[:, :, None] * g[:, None, :]
        return lp, g, H

    def component_log_densities(self, x):
        X, single = self._as_batch(x)
        L = np.stack([c._evaluate(X, 0)[0] for c in self.components], axis=1)
        return L[0] if single else L

    def sample(self, n, rng):
        counts = rng.multinomial(n, self.weights)
        out = [c.sample(m, rng) for c, m in zip(self.components, counts) if m > 0]
        X = np.concatenate(out, axis=0)
        return X[rng.permutation(n)]


def mixture_grad_hess(target: MixtureTarget, x):
    """Log-density, gradient and Hessian of a mixture.

    Raises ``FloatingPointError`` when every component underflows at ``x``;
    derivatives are meaningless there.
    """
    lp, g, H = target.grad_hess(x)
    if not np.all(np.isfinite(lp)):
        raise FloatingPointError("all mixture components underflow at x")
    return lp, g, H


# weights of the six warped components and of the four-mode IS proposal
WARPED_A = (1.0, 6.0, 4.0, 4.0, 1.0, 1.0)
WARPED_B = (0.2, -0.03, 0.1, 0.1, 0.1, 0.1)
WARPED_S1 = (0.0, 0.0, 7.0, -7.0, 7.0, -7.0)
WARPED_S2 = (0.0, -5.0, 7.0, 7.0, 7.5, 7.5)
WARPED_WEIGHTS = (1.0, 4.0, 2.5, 2.5, 0.5, 0.5)
IS_MODE_WEIGHTS = (1.0, 4.0, 2.5, 2.5)


def warped_mixture_target(dim: int) -> MixtureTarget:
    """Six-component warped-Gaussian mixture in ``dim`` dimensions."""
    comps = [
        WarpedGaussianComponent(a, b, s1, s2, dim)
        for a, b, s1, s2 in zip(WARPED_A, WARPED_B, WARPED_S1, WARPED_S2)
    ]
    w = np.asarray(WARPED_WEIGHTS)
    return MixtureTarget(comps, w / w.sum())


class LogisticPosteriorTarget(TargetDensity):
    """Logistic regression posterior: flat prior on the intercept, N(0, I/lam) on the rest.

    The log-density omits the normalizing constant, so ``normalized`` is False.
    """

    normalized = False

    def __init__(self, design, labels, ridge: float):
        X = np.asarray(design, dtype=float)
        y = np.asarray(labels, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("design must be (n, d) and labels (n,)")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("first column of the design must be the intercept (all ones)")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be binary")
        if ridge <= 0:
            raise ValueError("ridge must be positive")
        self.X, self.y, self.ridge = X, y, float(ridge)
        self.dim = X.shape[1]
        self.shrink = np.full(self.dim, self.ridge)
        self.shrink[0] = 0.0
        self._Xty = X.T @ y

    def _evaluate(self, T, order):
        eta = T @ self.X.T  # (m, n)
        # log(1 + e^eta) without overflow
        softplus = np.logaddexp(0.0, eta)
        lp = T @ self._Xty - softplus.sum(axis=1) - 0.5 * (T ** 2 @ self.shrink)
        if order == 0:
            return (lp,)
        p = expit(eta)
        g = self._Xty - p @ self.X - self.shrink * T
        if order == 1:
            return lp, g
        s = p * (1.0 - p)  # = e^eta / (1 + e^eta)^2
        H = -(s[:, None, :] * self.X.T) @ self.X
        H[:, np.arange(self.dim), np.arange(self.dim)] -= self.shrink
        return lp, g, H


def logistic_log_posterior(target: LogisticPosteriorTarget, theta):
    return target.grad_hess(theta)


def marginal_density(target: TargetDensity, dim_index: int, n_nodes: int = 200):
    """Exact 1-D marginal density of a Gaussian or warped-Gaussian (mixture) target.

    The second coordinate of a warped component has no closed form; it is
    integrated against the first coordinate by Gauss-Hermite quadrature.
    """
    if isinstance(target, MixtureTarget):
        parts = [marginal_density(c, dim_index, n_nodes) for c in target.components]
        w = target.weights

        def pdf(x):
            return sum(wi * f(x) for wi, f in zip(w, parts))

        return pdf
    if isinstance(target, GaussianTarget):
        m, s = target.mean[dim_index], np.sqrt(target.cov[dim_index, dim_index])
        return lambda x: _norm_pdf((np.asarray(x, float) - m) / s) / s
    if isinstance(target, WarpedGaussianComponent):
        if dim_index == 0:
            return lambda x: _norm_pdf((np.asarray(x, float) - target.s1) / target.a) / target.a
        if dim_index >= 2:
            return lambda x: _norm_pdf(np.asarray(x, float))
        nodes, wts = np.polynomial.hermite.hermgauss(n_nodes)
        y1 = np.sqrt(2.0) * target.a * nodes
        shift = target.s2 - target.b * (y1 ** 2 - target.a ** 2)

        def pdf(x):
            x = np.asarray(x, float)
            return (_norm_pdf(x[..., None] - shift) @ wts) / np.sqrt(np.pi)

        return pdf
    raise TypeError(f"no closed-form marginal for {type(target).__name__}")


def _norm_pdf(z):
    return np.exp(-0.5 * z ** 2) / np.sqrt(2.0 * np.pi)
