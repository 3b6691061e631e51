"""Defensive Student-t importance mixtures.

The proposal after ``k`` components is

    q(x) = (n0/n_k) p(x) + (b/n_k) * sum_l mvt(x | mu_l, Sigma_l, nu),   n_k = n0 + k b

A :class:`StudentTComponent` stores the covariance; its t scale matrix is
``Sigma (nu - 2) / nu``.  :meth:`StudentTComponent.build` lets callers hand
over ``Sigma`` as either the covariance or the scale matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .gaussflow import robust_cholesky


class DegenerateComponentError(np.linalg.LinAlgError):
    pass


class StudentTComponent:
    """Multivariate Student-t with given location, covariance and dof (> 2)."""

    def __init__(self, location, covariance, dof: float = 3.0):
        self.location = np.atleast_1d(np.asarray(location, dtype=float))
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        self.dim = self.location.size
        if cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match location")
        if dof <= 2:
            raise ValueError("dof must exceed 2 for the covariance to exist")
        self.covariance = 0.5 * (cov + cov.T)
        self.dof = float(dof)
        try:
            self.scale_chol = robust_cholesky(self.covariance * (self.dof - 2.0) / self.dof)
        except np.linalg.LinAlgError:
            raise DegenerateComponentError("component covariance is not positive definite") from None
        nu, d = self.dof, self.dim
        self._const = (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu)
                       - 0.5 * d * math.log(nu * math.pi)
                       - np.log(np.diag(self.scale_chol)).sum())

    @classmethod
    def from_scale(cls, location, scale, dof: float = 3.0) -> "StudentTComponent":
        """Build from the t scale matrix instead of the covariance."""
        return cls(location, np.asarray(scale, dtype=float) * dof / (dof - 2.0), dof)

    @classmethod
    def build(cls, location, matrix, dof: float = 3.0, parametrization: str = "covariance"):
        if parametrization == "covariance":
            return cls(location, matrix, dof)
        if parametrization == "scale":
            return cls.from_scale(location, matrix, dof)
        raise ValueError(f"unknown parametrization {parametrization!r}")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        Z = solve_triangular(self.scale_chol, (X - self.location).T, lower=True)
        maha = np.einsum("ij,ij->j", Z, Z)
        lp = self._const - 0.5 * (self.dof + self.dim) * np.log1p(maha / self.dof)
        return lp[0] if x.ndim == 1 else lp

    def sample(self, count: int, rng) -> np.ndarray:
        z = rng.standard_normal((count, self.dim))
        chi2 = rng.chisquare(self.dof, size=count)
        return self.location + (z @ self.scale_chol.T) * np.sqrt(self.dof / chi2)[:, None]

    def to_dict(self) -> dict:
        iu = np.triu_indices(self.dim)
        return {"location": self.location.tolist(), "cov_upper": self.covariance[iu].tolist(),
                "dof": self.dof}

    @classmethod
    def from_dict(cls, data: dict) -> "StudentTComponent":
        loc = np.asarray(data["location"], dtype=float)
        d = loc.size
        cov = np.zeros((d, d))
        cov[np.triu_indices(d)] = data["cov_upper"]
        cov = cov + np.triu(cov, 1).T
        return cls(loc, cov, data["dof"])


def student_t_log_density(comp: StudentTComponent, x):
    return comp.log_density(x)


def sample_component(comp: StudentTComponent, count: int, rng) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be at least 1")
    return comp.sample(count, rng)


class StudentTMixture:
    """Mixture of Student-t components with arbitrary fixed weights."""

    def __init__(self, components, weights):
        w = np.asarray(weights, dtype=float)
        if len(components) != w.size or np.any(w < 0):
            raise ValueError("one nonnegative weight per component required")
        self.components = list(components)
        self.weights = w / w.sum()
        self.dim = self.components[0].dim

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        with np.errstate(divide="ignore"):
            L = np.stack([c.log_density(X) for c in self.components], axis=1) + np.log(self.weights)
        lp = logsumexp(L, axis=1)
        return lp[0] if x.ndim == 1 else lp

    def sample(self, count: int, rng) -> np.ndarray:
        counts = rng.multinomial(count, self.weights)
        X = np.concatenate([c.sample(m, rng) for c, m in zip(self.components, counts) if m > 0])
        return X[rng.permutation(count)]

    def to_dict(self) -> dict:
        return {"kind": "student_t_mixture", "weights": self.weights.tolist(),
                "components": [c.to_dict() for c in self.components]}


@dataclass
class ImportanceMixture:
    """Prior plus equally weighted Student-t components (defensive mixture)."""

    prior: object
    n0: int
    b: int
    components: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def n_k(self) -> int:
        return self.n0 + self.k * self.b

    @property
    def dim(self) -> int:
        return self.prior.dim

    def mixture_weights(self) -> np.ndarray:
        """Prior weight followed by the per-component weights; sums to 1."""
        return np.array([self.n0] + [self.b] * self.k, dtype=float) / self.n_k

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        terms = [math.log(self.n0 / self.n_k) + self.prior.log_density(X)]
        log_b = math.log(self.b / self.n_k)
        terms += [log_b + c.log_density(X) for c in self.components]
        lp = logsumexp(np.stack(terms, axis=1), axis=1)
        return lp[0] if x.ndim == 1 else lp

    def add_component(self, comp: StudentTComponent) -> "ImportanceMixture":
        return ImportanceMixture(self.prior, self.n0, self.b, self.components + [comp])

    def sample(self, count: int, rng) -> np.ndarray:
        counts = rng.multinomial(count, self.mixture_weights())
        sources = [self.prior] + self.components
        X = np.concatenate([s.sample(m, rng) for s, m in zip(sources, counts) if m > 0])
        return X[rng.permutation(count)]

    def to_dict(self) -> dict:
        prior = self.prior.to_dict() if hasattr(self.prior, "to_dict") else None
        return {"n0": self.n0, "b": self.b, "prior": prior,
                "components": [c.to_dict() for c in self.components]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, prior=None) -> "ImportanceMixture":
        if prior is None:
            prior = StudentTComponent.from_dict(data["prior"])
        comps = [StudentTComponent.from_dict(c) for c in data["components"]]
        return cls(prior, int(data["n0"]), int(data["b"]), comps)

    @classmethod
    def from_json(cls, text: str, prior=None) -> "ImportanceMixture":
        return cls.from_dict(json.loads(text), prior)


def mixture_log_density(mix: ImportanceMixture, x):
    return mix.log_density(x)


def add_component(mix: ImportanceMixture, comp: StudentTComponent) -> ImportanceMixture:
    return mix.add_component(comp)


@dataclass
class WeightedSampleSet:
    """Importance samples with cached log target and per-source log proposal terms.

    ``origin`` is -1 for prior draws and the component index otherwise.
    ``log_prior`` and ``log_comp_sum`` (log of the unweighted sum of component
    densities) are caches; ``n_cached[i]`` counts the components already
    folded into ``log_comp_sum[i]``.
    """

    points: np.ndarray
    log_target: np.ndarray
    log_proposal: np.ndarray
    origin: np.ndarray
    log_prior: np.ndarray | None = None
    log_comp_sum: np.ndarray | None = None
    n_cached: np.ndarray | None = None

    def __len__(self):
        return self.points.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        return self.log_target - self.log_proposal

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def log_c_hat(self) -> float:
        return float(logsumexp(self.log_weights) - math.log(len(self)))

    @classmethod
    def new(cls, points, log_target, origin) -> "WeightedSampleSet":
        n = points.shape[0]
        return cls(points, np.asarray(log_target, dtype=float), np.full(n, np.nan),
                   np.asarray(origin, dtype=int), np.full(n, np.nan), np.full(n, -np.inf),
                   np.zeros(n, dtype=int))

    def append(self, other: "WeightedSampleSet") -> "WeightedSampleSet":
        cat = np.concatenate
        return WeightedSampleSet(
            cat([self.points, other.points]), cat([self.log_target, other.log_target]),
            cat([self.log_proposal, other.log_proposal]), cat([self.origin, other.origin]),
            cat([self.log_prior, other.log_prior]), cat([self.log_comp_sum, other.log_comp_sum]),
            cat([self.n_cached, other.n_cached]))


def reweight_all(mix: ImportanceMixture, samples: WeightedSampleSet,
                 incremental: bool = True) -> WeightedSampleSet:
    """Recompute log q and weights of every sample against ``mix``.

    With ``incremental`` only components not yet folded into a sample's
    running log-sum are evaluated; otherwise everything is recomputed.
    """
    n = len(samples)
    log_prior = samples.log_prior.copy() if incremental else np.full(n, np.nan)
    comp_sum = samples.log_comp_sum.copy() if incremental else np.full(n, -np.inf)
    cached = samples.n_cached.copy() if incremental else np.zeros(n, dtype=int)
    todo = np.isnan(log_prior)
    if todo.any():
        log_prior[todo] = mix.prior.log_density(samples.points[todo])
    for l, comp in enumerate(mix.components):
        rows = cached <= l
        if rows.any():
            comp_sum[rows] = np.logaddexp(comp_sum[rows], comp.log_density(samples.points[rows]))
    cached[:] = mix.k
    log_q = math.log(mix.n0 / mix.n_k) + log_prior
    if mix.k:
        log_q = np.logaddexp(log_q, math.log(mix.b / mix.n_k) + comp_sum)
    return WeightedSampleSet(samples.points, samples.log_target, log_q, samples.origin,
                             log_prior, comp_sum, cached)
