"""Post-hoc choice of the final pseudo-time t1 and the cost-per-sample rule.

Given a pilot LIMIS run at ``t1_I`` the mixture ``q(x | t1)`` is rebuilt by
re-running the moment flow from the stored component centres.  Three
estimators of proposal quality reuse the pilot's ``pi(x_i)`` and weights
``w_i = pi(x_i) / q(x_i | t1_I)``; only ``q(x_i | t1)`` changes with ``t1``:

    v_hat(t1)  = 1/(c^2 n) sum pi_i / q_i(t1) (h_i - I)^2 w_i       (self-normalised)
    vt_hat(t1) = 1/n sum h_i^2 pi_i / q_i(t1) w_i                   (normalised target)
    g_hat(t1)  = -1/(c n) sum log q_i(t1) w_i                       (KL up to a constant)
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .diagnostics import efficiency
from .gaussflow import FlowError, flow_batch, flow_to_t1, FlowConfig
from .mixture import ImportanceMixture, StudentTComponent

log = logging.getLogger(__name__)

CRITERIA = {
    "v": "self_normalized_variance", "self_normalized_variance": "self_normalized_variance",
    "vtilde": "normalized_variance", "normalized_variance": "normalized_variance",
    "kl": "kl_divergence", "kl_divergence": "kl_divergence",
}
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateCriterionWarning(UserWarning):
    pass


def _unit(X):
    return np.ones(X.shape[0])


@dataclass
class TuningProblem:
    """Pilot LIMIS output plus the settings of the t1 search.

    ``resample`` is "uniform" (indices drawn multinomially with equal
    probabilities) or "weighted" (probabilities proportional to w_i; the
    per-sample weight in each estimator is then replaced by c_hat).
    """

    target: object
    pilot: object  # SamplerRunResult from run_limis
    t1_initial: float
    criterion: str = "auto"
    h: object = None
    subsample_fraction: float = 0.1
    bracket: tuple | None = None
    resample: str = "uniform"
    t_parametrization: str = "scale"
    max_steps: int = 100_000
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must lie in (0, 1]")
        if self.resample not in ("uniform", "weighted"):
            raise ValueError("resample must be 'uniform' or 'weighted'")
        s = self.pilot.samples
        if s is None or self.pilot.centers is None or self.pilot.step_sizes is None:
            raise ValueError("pilot lacks samples, centres or step sizes")
        if np.any(np.isnan(s.log_proposal)):
            raise ValueError("pilot proposal densities are incomplete")
        if self.criterion == "auto":
            self.criterion = ("normalized_variance" if getattr(self.target, "normalized", False)
                              else "kl_divergence")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        self.criterion = CRITERIA[self.criterion]
        if self.h is None:
            self.h = _unit
        if self.bracket is None:
            self.bracket = (self.t1_initial / 100.0, self.t1_initial * 100.0)
        lw = s.log_weights
        self.log_w = lw
        self.log_c_hat = float(logsumexp(lw) - math.log(lw.size))
        self.h_values = np.asarray(self.h(s.points), dtype=float)
        wn = np.exp(lw - logsumexp(lw))
        self.I_hat = float(wn @ self.h_values)

    @property
    def mixture(self) -> ImportanceMixture:
        return self.pilot.mixture

    def subsample(self, rng) -> np.ndarray:
        """Indices of a multinomial subsample of size ceil(fraction * n_k)."""
        n = self.log_w.size
        m = math.ceil(self.subsample_fraction * n)
        if self.resample == "uniform":
            p = np.full(n, 1.0 / n)
        else:
            p = np.exp(self.log_w - logsumexp(self.log_w))
        counts = rng.multinomial(m, p)
        return np.repeat(np.arange(n), counts)


def rebuild_mixture_at(problem: TuningProblem, t1: float) -> ImportanceMixture:
    """Mixture with every component re-flowed from its pilot centre to ``t1``."""
    key = float(t1)
    if key in problem._cache:
        return problem._cache[key]
    pilot_mix = problem.mixture
    centers, steps = problem.pilot.centers, problem.pilot.step_sizes
    dof = pilot_mix.components[0].dof if pilot_mix.components else 3.0
    try:
        means, covs = flow_batch(problem.target, centers, steps, t1, problem.max_steps)
        bad = [j for j in range(len(centers))
               if not (np.all(np.isfinite(means[j])) and np.all(np.isfinite(covs[j])))]
    except (FlowError, FloatingPointError, np.linalg.LinAlgError):
        bad, means, covs = None, [], []
    if bad is None or bad:
        # locate the offending centre with per-centre flows
        means, covs = [], []
        cfg = FlowConfig(t1=t1, max_steps=problem.max_steps)
        for j, (x, h) in enumerate(zip(centers, steps)):
            try:
                out = flow_to_t1(problem.target, x, cfg, step=h)
            except (FlowError, FloatingPointError, np.linalg.LinAlgError) as exc:
                raise FlowError(f"flow from centre {j} failed at t1={t1}: {exc}", x) from exc
            means.append(out.mean)
            covs.append(out.cov)
    comps = []
    for j, (m, S) in enumerate(zip(means, covs)):
        try:
            comps.append(StudentTComponent.build(m, S, dof, problem.t_parametrization))
        except np.linalg.LinAlgError as exc:
            raise FlowError(f"centre {j} gives a degenerate component at t1={t1}", centers[j]) from exc
    mix = ImportanceMixture(pilot_mix.prior, pilot_mix.n0, pilot_mix.b, comps)
    problem._cache[key] = mix
    return mix


def _log_q(problem: TuningProblem, t1: float, idx) -> np.ndarray:
    mix = rebuild_mixture_at(problem, t1)
    s = problem.pilot.samples
    X = s.points[idx]
    # the prior never changes with t1, so its cached density is reused when possible
    log_prior = s.log_prior[idx] if mix.prior is problem.mixture.prior else mix.prior.log_density(X)
    terms = [math.log(mix.n0 / mix.n_k) + log_prior]
    lb = math.log(mix.b / mix.n_k)
    terms += [lb + c.log_density(X) for c in mix.components]
    return logsumexp(np.stack(terms, axis=1), axis=1)


def _weight_part(problem: TuningProblem, idx) -> np.ndarray:
    # log of the per-sample weight; c_hat stands in for it under weighted resampling
    if problem.resample == "weighted":
        return np.full(len(idx), problem.log_c_hat)
    return problem.log_w[idx]


def _index(problem, idx):
    return np.arange(problem.log_w.size) if idx is None else np.asarray(idx)


def estimate_self_normalized_variance(problem: TuningProblem, t1: float, idx=None) -> float:
    idx = _index(problem, idx)
    hv = problem.h_values[idx]
    if np.ptp(problem.h_values) == 0.0:
        warnings.warn("criterion degenerate for constant h, use KL", DegenerateCriterionWarning,
                      stacklevel=2)
        return 0.0
    s = problem.pilot.samples
    log_r = s.log_target[idx] - _log_q(problem, t1, idx) + _weight_part(problem, idx)
    terms = np.exp(log_r - 2.0 * problem.log_c_hat) * (hv - problem.I_hat) ** 2
    return float(terms.sum() / len(idx))


def estimate_normalized_variance(problem: TuningProblem, t1: float, idx=None) -> float:
    if not getattr(problem.target, "normalized", False):
        raise ValueError("normalized-variance criterion needs a normalised target density")
    idx = _index(problem, idx)
    hv = problem.h_values[idx]
    s = problem.pilot.samples
    log_r = s.log_target[idx] - _log_q(problem, t1, idx) + _weight_part(problem, idx)
    return float((hv ** 2 * np.exp(log_r)).sum() / len(idx))


def estimate_kl(problem: TuningProblem, t1: float, idx=None) -> float:
    idx = _index(problem, idx)
    w_over_c = np.exp(_weight_part(problem, idx) - problem.log_c_hat)
    return float(-(_log_q(problem, t1, idx) * w_over_c).sum() / len(idx))


ESTIMATORS = {
    "self_normalized_variance": estimate_self_normalized_variance,
    "normalized_variance": estimate_normalized_variance,
    "kl_divergence": estimate_kl,
}


@dataclass
class TuningResult:
    t1_initial: float
    t1_star: float
    criterion: str
    trace: list  # (t1, value) in evaluation order
    subsample_size: int

    def to_dict(self) -> dict:
        return {"t1_initial": self.t1_initial, "t1_star": self.t1_star, "criterion": self.criterion,
                "subsample_size": self.subsample_size,
                "trace": [[float(t), float(v)] for t, v in self.trace]}


def golden_section(f, lo: float, hi: float, tol: float = 1e-3, max_iter: int = 200) -> float:
    """Minimise ``f`` on [lo, hi]; stops when the bracket is narrower than ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_t1(problem: TuningProblem, rng=None, tol: float = 1e-3) -> TuningResult:
    """Golden-section search for t1 over log t1 in ``problem.bracket``."""
    if rng is None:
        rng = np.random.default_rng(0)
    idx = problem.subsample(rng)
    est = ESTIMATORS[problem.criterion]
    trace = []

    def f(s):
        t1 = math.exp(s)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateCriterionWarning)
                v = est(problem, t1, idx)
        except (FlowError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.debug("criterion at t1=%g failed: %s", t1, exc)
            v = math.inf
        trace.append((t1, v))
        return v if np.isfinite(v) else math.inf

    if problem.criterion == "self_normalized_variance" and np.ptp(problem.h_values) == 0.0:
        warnings.warn("criterion degenerate for constant h, use KL", DegenerateCriterionWarning,
                      stacklevel=2)
    lo, hi = problem.bracket
    s_star = golden_section(f, math.log(lo), math.log(hi), tol)
    if not any(np.isfinite(v) for _, v in trace):
        raise FloatingPointError("criterion is non-finite across the whole bracket")
    return TuningResult(problem.t1_initial, math.exp(s_star), problem.criterion, trace, len(idx))


def mixture_efficiency(target, mixture, n: int, rng) -> float:
    """EF of fresh importance samples drawn from ``mixture``."""
    X = mixture.sample(n, rng)
    return efficiency(target.log_density(X) - mixture.log_density(X))


@dataclass
class CostModel:
    c_pi: float
    c_q: float
    efficiency_curve: np.ndarray  # EF(j) for j = 1..k

    def __post_init__(self):
        if self.c_pi <= 0 or self.c_q <= 0:
            raise ValueError("costs must be positive")
        self.efficiency_curve = np.asarray(self.efficiency_curve, dtype=float)
        if np.any(self.efficiency_curve < 0) or np.any(self.efficiency_curve > 1.0 + 1e-12):
            raise ValueError("efficiencies must lie in [0, 1]")


def cost_per_sample(model: CostModel, j: int) -> float:
    """(c_pi + j c_q) / EF(j); infinite when EF(j) = 0."""
    if not 1 <= j <= model.efficiency_curve.size:
        raise ValueError("j out of range")
    ef = model.efficiency_curve[j - 1]
    if ef == 0.0:
        return math.inf
    return (model.c_pi + j * model.c_q) / ef


def cost_curve(model: CostModel) -> np.ndarray:
    return np.array([cost_per_sample(model, j) for j in range(1, model.efficiency_curve.size + 1)])


def optimal_stopping_iteration(model: CostModel) -> int:
    """Iteration j (1-based) with the lowest cost per independent sample."""
    return int(np.argmin(cost_curve(model))) + 1
