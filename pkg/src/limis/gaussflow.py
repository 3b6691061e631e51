"""Langevin moment flow: local Gaussian approximations to a target.

The mean and covariance of a linearised Langevin diffusion obey

    dmu/dt    = 0.5 * grad log pi(mu)
    dSigma/dt = A Sigma + Sigma A + I,     A = 0.5 * hess log pi(mu)

which are integrated here with classical RK4.  The step size is chosen
once at the start point so that one coarse step and a refined reference
solution differ by a prescribed population effective sample size (PESS).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

MIN_STEP = 1e-6


class FlowError(RuntimeError):
    """Integration hit a non-finite gradient or Hessian."""

    def __init__(self, message, mean=None):
        super().__init__(message)
        self.mean = None if mean is None else np.array(mean, copy=True)


class StiffTargetError(FlowError):
    pass


class PESSUndefinedError(ValueError):
    """2 * Sigma_q* - Sigma_q is not positive definite."""


@dataclass
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray
    time: float = 0.0
    step: float | None = None  # integration step that produced this state, if fixed

    @classmethod
    def point_mass(cls, x0, time: float = 0.0):
        x0 = np.asarray(x0, dtype=float)
        return cls(x0.copy(), np.zeros((x0.size, x0.size)), time)


@dataclass
class FlowConfig:
    t1: float
    alpha: float = 0.99
    refine_ratio: int = 10
    max_steps: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.t1 <= 0:
            raise ValueError("t1 must be positive")
        if self.refine_ratio < 2:
            raise ValueError("refine_ratio must be at least 2")


def robust_cholesky(S, tries: int = 3):
    """Cholesky factor of ``S``, adding jitter 1e-10 * trace/d up to ``tries`` times."""
    S = np.asarray(S, dtype=float)
    jitter = 1e-10 * max(np.trace(S), 0.0) / S.shape[0]
    if jitter == 0.0:
        jitter = 1e-10
    M = S
    for attempt in range(tries + 1):
        try:
            return np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            if attempt == tries:
                raise
            M = M + jitter * np.eye(S.shape[0])


def _drift(target, mean, cov):
    _, g, H = target.grad_hess(mean)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        bad = mean if mean.ndim == 1 else mean[~np.all(np.isfinite(g), axis=-1)]
        raise FlowError("non-finite gradient or Hessian during moment flow", bad)
    A = 0.5 * H
    AS = A @ cov
    eye = np.eye(mean.shape[-1])
    return 0.5 * g, AS + np.swapaxes(AS, -1, -2) + eye


def rk4_moments(target, mean, cov, h):
    """One RK4 step of the moment ODEs.

    Works on a single state (``mean`` (d,), ``cov`` (d, d)) or on a batch
    (``mean`` (m, d), ``cov`` (m, d, d)); ``h`` may be a scalar or an (m,) vector.
    """
    h = np.asarray(h, dtype=float)
    hm = h[..., None] if h.ndim else h
    hc = h[..., None, None] if h.ndim else h
    k1m, k1c = _drift(target, mean, cov)
    k2m, k2c = _drift(target, mean + 0.5 * hm * k1m, cov + 0.5 * hc * k1c)
    k3m, k3c = _drift(target, mean + 0.5 * hm * k2m, cov + 0.5 * hc * k2c)
    k4m, k4c = _drift(target, mean + hm * k3m, cov + hc * k3c)
    new_mean = mean + hm / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
    new_cov = cov + hc / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
    new_cov = 0.5 * (new_cov + np.swapaxes(new_cov, -1, -2))
    return new_mean, new_cov


def moment_step(target, state: GaussianMoments, dt: float) -> GaussianMoments:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return GaussianMoments(state.mean.copy(), state.cov.copy(), state.time)
    m, c = rk4_moments(target, state.mean, state.cov, dt)
    return GaussianMoments(m, c, state.time + dt)


def _logdet_chol(S):
    L = robust_cholesky(S)
    return 2.0 * np.log(np.diag(L)).sum()


def log_pess(q_mean, q_cov, qstar_mean, qstar_cov) -> float:
    q_mean, qstar_mean = np.atleast_1d(q_mean), np.atleast_1d(qstar_mean)
    q_cov, qstar_cov = np.atleast_2d(q_cov), np.atleast_2d(qstar_cov)
    M = 2.0 * qstar_cov - q_cov
    M = 0.5 * (M + M.T)
    try:
        LM = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise PESSUndefinedError("2*Sigma_q* - Sigma_q is not positive definite") from None
    delta = qstar_mean - q_mean
    r = np.linalg.solve(LM, delta)  # delta^T M^{-1} delta = |L^{-1} delta|^2
    log_ew2 = (
        _logdet_chol(qstar_cov)
        - 0.5 * _logdet_chol(q_cov)
        - np.log(np.diag(LM)).sum()
        + r @ r
    )
    return -log_ew2


def pess(q_mean, q_cov, qstar_mean, qstar_cov) -> float:
    """Population ESS of importance density ``qstar`` for target ``q``, both Gaussian.

    Equals ``1 / E_{q*}[(q/q*)^2]``, the large-sample limit of ESS/n.
    """
    return float(np.exp(log_pess(q_mean, q_cov, qstar_mean, qstar_cov)))


def step_pess(target, init: GaussianMoments, dt: float, refine_ratio: int = 10) -> float:
    """PESS between one coarse RK4 step of size ``dt`` and ``refine_ratio`` substeps."""
    coarse = moment_step(target, init, dt)
    ref = init
    for _ in range(refine_ratio):
        ref = moment_step(target, ref, dt / refine_ratio)
    return pess(coarse.mean, coarse.cov, ref.mean, ref.cov)


def select_step_size(target, init: GaussianMoments, config: FlowConfig) -> float:
    """Step size at which the coarse/refined PESS equals ``config.alpha``."""
    alpha, t1 = config.alpha, config.t1

    def f(dt):
        # overly long trial steps can overflow; they simply count as PESS = 0
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                return step_pess(target, init, dt, config.refine_ratio)
        except (PESSUndefinedError, FlowError, np.linalg.LinAlgError, FloatingPointError):
            return 0.0

    if t1 <= MIN_STEP:
        return t1
    if f(t1) >= alpha:
        return t1
    if f(MIN_STEP) < alpha:
        raise StiffTargetError("target too stiff at this start point", init.mean)
    s = brentq(lambda s: f(math.exp(s)) - alpha, math.log(MIN_STEP), math.log(t1),
               xtol=1e-12, rtol=1e-12, maxiter=200)
    return math.exp(s)


def n_steps(t1: float, dt: float) -> int:
    return max(1, math.ceil(t1 / dt - 1e-9))


def integrate_fixed(target, init: GaussianMoments, dt: float, t1: float,
                    max_steps: int = 100_000, trajectory: list | None = None) -> GaussianMoments:
    """Integrate from ``init.time`` to ``t1`` with steps ``dt``; the last one is shortened."""
    n = n_steps(t1 - init.time, dt)
    if n > max_steps:
        raise FlowError(f"{n} steps needed, exceeds max_steps={max_steps}", init.mean)
    state = init
    if trajectory is not None:
        trajectory.append(state)
    for _ in range(n - 1):
        state = moment_step(target, state, dt)
        if trajectory is not None:
            trajectory.append(state)
    state = moment_step(target, state, (t1 - init.time) - (n - 1) * dt)
    state.time = t1
    if trajectory is not None:
        trajectory.append(state)
    return state


def flow_to_t1(target, x0, config: FlowConfig, step: float | None = None,
               trajectory: list | None = None) -> GaussianMoments:
    """Local Gaussian approximation started from the point mass at ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("start point must be finite")
    init = GaussianMoments.point_mass(x0)
    if step is None:
        step = select_step_size(target, init, config)
    out = integrate_fixed(target, init, step, config.t1, config.max_steps, trajectory)
    out.step = step
    return out


def flow_batch(target, centers, steps, t1: float, max_steps: int = 100_000):
    """Moments at ``t1`` for many start points at once, each with its own step size.

    Produces the same states as calling :func:`flow_to_t1` per center with
    the given step; rows that finish early are frozen.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    steps = np.asarray(steps, dtype=float)
    m, d = centers.shape
    counts = np.array([n_steps(t1, h) for h in steps])
    if counts.max() > max_steps:
        raise FlowError(f"{counts.max()} steps needed, exceeds max_steps={max_steps}")
    mean = centers.copy()
    cov = np.zeros((m, d, d))
    for j in range(counts.max() - 1):
        active = j < counts - 1
        nm, nc = rk4_moments(target, mean[active], cov[active], steps[active])
        mean[active], cov[active] = nm, nc
    last = t1 - (counts - 1) * steps  # same arithmetic as integrate_fixed
    return rk4_moments(target, mean, cov, last)


def write_trajectory_csv(path, trajectory) -> None:
    """Rows of (t, mu_1..mu_d, upper triangle of Sigma, row-major)."""
    d = trajectory[0].mean.size
    iu = np.triu_indices(d)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"mu_{i + 1}" for i in range(d)]
                   + [f"sigma_{i + 1}_{j + 1}" for i, j in zip(*iu)])
        for s in trajectory:
            w.writerow([repr(float(s.time))] + [repr(float(v)) for v in s.mean]
                       + [repr(float(v)) for v in s.cov[iu]])
