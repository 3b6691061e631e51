"""LIMIS, NIMIS, plain importance sampling and MALA."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import efficiency
from .gaussflow import FlowConfig, FlowError, flow_to_t1
from .mixture import (DegenerateComponentError, ImportanceMixture, StudentTComponent,
                      StudentTMixture, WeightedSampleSet, reweight_all)

log = logging.getLogger(__name__)


class IterationError(RuntimeError):
    """No usable mixture component could be built in an iteration."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator with an independent stream per (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass
class SamplerConfig:
    n0: int
    b: int
    k: int
    dof: float = 3.0
    flow: FlowConfig | None = None
    mala_step: float | None = None
    mala_target_accept: float = 0.574
    burn_in_fraction: float = 0.1
    max_tries: int = 5
    # how a component's (mean, Sigma) enters mvt: Sigma as the t "scale" matrix or as its "covariance"
    t_parametrization: str = "scale"
    # optional cost-per-sample stopping: stop once c(j) has not improved for `patience` iterations
    cost_stop: tuple | None = None

    def __post_init__(self):
        if min(self.n0, self.b) < 1 or self.k < 0:
            raise ValueError("n0 and b must be >= 1 and k >= 0")

    @classmethod
    def defaults(cls, dim: int, k: int, **kw) -> "SamplerConfig":
        return cls(n0=1000 * dim, b=100 * dim, k=k, **kw)


@dataclass
class SamplerRunResult:
    method: str
    samples: WeightedSampleSet | None = None
    mixture: object = None
    per_iteration_efficiency: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seed: int | None = None
    centers: np.ndarray | None = None  # start points x_j of each added component
    step_sizes: np.ndarray | None = None  # LIMIS integration step per component
    chain: np.ndarray | None = None  # MALA draws after burn-in
    acceptance_rate: float | None = None
    mala_step: float | None = None

    @property
    def efficiency(self) -> float:
        if self.samples is not None:
            return efficiency(self.samples.log_weights)
        from .diagnostics import ess_mc
        return ess_mc(self.chain) / self.chain.shape[0]


def _resolve_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return make_rng(int(rng)), int(rng)


def nearest_neighbour_moments(points, center, b: int):
    """Mean ``center`` and covariance of the ``b`` Mahalanobis-nearest points.

    The metric is the (unweighted) covariance of all ``points``; the
    neighbour covariance is taken about ``center``.
    """
    d = points.shape[1]
    S = np.atleast_2d(np.cov(points, rowvar=False))
    S = S + 1e-8 * np.trace(S) / d * np.eye(d)  # guards a singular metric
    L = np.linalg.cholesky(S)
    diff = points - center
    Z = np.linalg.solve(L, diff.T)
    dist = np.einsum("ij,ij->j", Z, Z)
    nearest = np.argsort(dist, kind="stable")[:b]
    D = diff[nearest]
    return np.array(center, copy=True), D.T @ D / b


def _imis(target, prior, config: SamplerConfig, rng, build, method):
    rng, seed = _resolve_rng(rng)
    mix = ImportanceMixture(prior, config.n0, config.b)
    X = prior.sample(config.n0, rng)
    samples = reweight_all(mix, WeightedSampleSet.new(X, target.log_density(X), np.full(config.n0, -1)))
    effs, centers, steps = [], [], []
    best_cost, stale = math.inf, 0
    for it in range(config.k):
        order = np.argsort(-samples.log_weights, kind="stable")
        comp = None
        for attempt, j in enumerate(order[:config.max_tries]):
            x_j = samples.points[j]
            try:
                mean, cov, step = build(samples, x_j)
                comp = StudentTComponent.build(mean, cov, config.dof, config.t_parametrization)
                break
            except (FlowError, DegenerateComponentError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.debug("iteration %d: component from sample %d rejected (%s)", it, j, exc)
        if comp is None:
            raise IterationError(f"iteration {it}: {config.max_tries} candidate components failed")
        centers.append(np.array(x_j, copy=True))
        steps.append(np.nan if step is None else step)
        mix = mix.add_component(comp)
        Xn = comp.sample(config.b, rng)
        new = WeightedSampleSet.new(Xn, target.log_density(Xn), np.full(config.b, it))
        samples = reweight_all(mix, samples.append(new))
        effs.append(efficiency(samples.log_weights))
        if config.cost_stop is not None:
            c_pi, c_q, patience = config.cost_stop
            cost = (c_pi + (it + 1) * c_q) / max(effs[-1], 1e-300)
            if cost < best_cost:
                best_cost, stale = cost, 0
            else:
                stale += 1
                if stale >= patience:
                    break
    d = prior.dim
    return SamplerRunResult(method, samples, mix, np.array(effs), seed,
                            np.array(centers).reshape(-1, d), np.array(steps))


def run_nimis(target, prior, config: SamplerConfig, rng) -> SamplerRunResult:
    """Incremental mixture IS with nearest-neighbour component covariances."""

    def build(samples, x_j):
        mean, cov = nearest_neighbour_moments(samples.points, x_j, config.b)
        return mean, cov, None

    return _imis(target, prior, config, rng, build, "nimis")


def run_limis(target, prior, config: SamplerConfig, rng, moments=None) -> SamplerRunResult:
    """Incremental mixture IS with components from the Langevin moment flow.

    ``moments`` may override the component builder (``x_j -> (mean, cov)``);
    it exists so the shared skeleton can be tested against NIMIS.
    """
    if config.flow is None:
        raise ValueError("LIMIS needs config.flow")

    def build(samples, x_j):
        if moments is not None:
            return (*moments(samples, x_j), None)
        out = flow_to_t1(target, x_j, config.flow)
        return out.mean, out.cov, out.step

    return _imis(target, prior, config, rng, build, "limis")


def run_plain_is(target, proposal, n: int, rng) -> SamplerRunResult:
    rng, seed = _resolve_rng(rng)
    X = proposal.sample(n, rng)
    lt = target.log_density(X)
    lq = proposal.log_density(X)
    samples = WeightedSampleSet(X, lt, lq, np.full(n, -1))
    return SamplerRunResult("is", samples, proposal, np.array([efficiency(lt - lq)]), seed)


def mala_log_ratio(target, x, x_new, eps: float, lp=None, g=None, lp_new=None, g_new=None) -> float:
    """Metropolis-Hastings log acceptance ratio of a MALA move x -> x_new."""
    if lp is None:
        lp, g = target.value_and_grad(x)
    if lp_new is None:
        lp_new, g_new = target.value_and_grad(x_new)
    fwd = x_new - x - 0.5 * eps ** 2 * g
    rev = x - x_new - 0.5 * eps ** 2 * g_new
    return float(lp_new - lp - (rev @ rev - fwd @ fwd) / (2.0 * eps ** 2))


def _initial_mala_step(target, x, target_accept, rng):
    """Halve or double a trial step until one-step acceptance crosses the target."""
    d = x.size
    eps = d ** (-1.0 / 6.0)
    lp, g = target.value_and_grad(x)

    def accept(e):
        z = rng.standard_normal(d)
        xn = x + 0.5 * e ** 2 * g + e * z
        lpn, gn = target.value_and_grad(xn)
        if not (np.isfinite(lpn) and np.all(np.isfinite(gn))):
            return 0.0
        return min(1.0, math.exp(min(0.0, mala_log_ratio(target, x, xn, e, lp, g, lpn, gn))))

    a = np.mean([accept(eps) for _ in range(5)])
    direction = 1.0 if a > target_accept else -1.0
    for _ in range(60):
        eps_new = eps * 2.0 ** direction
        a = np.mean([accept(eps_new) for _ in range(5)])
        eps = eps_new
        if (a > target_accept) != (direction > 0):
            break
    return eps


def run_mala(target, x_init, n_iters: int, config: SamplerConfig, rng) -> SamplerRunResult:
    """MALA with step-size adaptation during the burn-in only.

    During the first ``burn_in_fraction`` of the chain, log(eps) follows a
    Robbins-Monro recursion with gain 1/(10 + i) toward the target
    acceptance rate; the burn-in draws are discarded.
    """
    rng, seed = _resolve_rng(rng)
    x = np.array(x_init, dtype=float)
    d = x.size
    target_accept = config.mala_target_accept
    eps = config.mala_step or _initial_mala_step(target, x, target_accept, rng)
    n_burn = int(round(config.burn_in_fraction * n_iters))
    lp, g = target.value_and_grad(x)
    chain = np.empty((n_iters, d))
    accepted = 0
    log_eps = math.log(eps)
    for i in range(n_iters):
        eps = math.exp(log_eps)
        x_new = x + 0.5 * eps ** 2 * g + eps * rng.standard_normal(d)
        lp_new, g_new = target.value_and_grad(x_new)
        if np.isfinite(lp_new) and np.all(np.isfinite(g_new)):
            log_a = mala_log_ratio(target, x, x_new, eps, lp, g, lp_new, g_new)
        else:
            log_a = -math.inf
        a = math.exp(min(0.0, log_a))
        if math.log(rng.uniform()) < log_a:
            x, lp, g = x_new, lp_new, g_new
            if i >= n_burn:
                accepted += 1
        if i < n_burn:
            log_eps += (a - target_accept) / (10.0 + i)
        chain[i] = x
    kept = chain[n_burn:]
    rate = accepted / max(kept.shape[0], 1)
    return SamplerRunResult("mala", chain=kept, seed=seed, acceptance_rate=rate,
                            mala_step=math.exp(log_eps))


def _ascent_direction(g, H):
    lam, V = np.linalg.eigh(H)
    # Newton step on the negative-definite part, flipped curvature elsewhere
    lam = np.maximum(np.abs(lam), 1e-8)
    return V @ ((V.T @ g) / lam)


def newton_mode(target, x0, max_iter: int = 500, tol: float = 1e-9):
    """Damped Newton ascent on log pi; raises if it does not converge."""
    x = np.array(x0, dtype=float)
    lp, g, H = target.grad_hess(x)
    for _ in range(max_iter):
        if np.max(np.abs(g)) < tol * max(1.0, np.max(np.abs(x))):
            return x
        step = _ascent_direction(g, H)
        t = 1.0
        slack = 1e-12 * max(1.0, abs(lp))  # rounding noise near the optimum
        while t > 1e-12:
            x_new = x + t * step
            lp_new = target.log_density(x_new)
            if lp_new >= lp - slack:
                break
            t *= 0.5
        else:
            return x  # no ascent possible: stationary to working precision
        x = x_new
        lp, g, H = target.grad_hess(x)
    raise RuntimeError(f"Newton ascent from {np.asarray(x0).tolist()} did not converge")


def find_modes(target, starts=None, merge_tol: float = 1e-4):
    """Local maxima of log pi reached from each start point, deduplicated.

    By default the starts are the modes of a mixture target's components,
    and the returned modes keep the order of first discovery.
    """
    if starts is None:
        comps = getattr(target, "components", [target])
        starts = [c.mode() for c in comps]
    modes = []
    for s in starts:
        m = newton_mode(target, s)
        if np.max(np.linalg.eigvalsh(target.hess(m))) >= 0:
            continue  # saddle, not a maximum
        if all(np.linalg.norm(m - o) > merge_tol for o in modes):
            modes.append(m)
    return modes


def laplace_t_mixture(target, modes, weights=None, dof: float = 3.0,
                      parametrization: str = "scale") -> StudentTMixture:
    """Student-t mixture centred at ``modes`` with matrices -2 H^{-1}."""
    comps = [StudentTComponent.build(m, -2.0 * np.linalg.inv(target.hess(m)), dof, parametrization)
             for m in modes]
    if weights is None:
        weights = np.ones(len(modes))
    return StudentTMixture(comps, weights)
