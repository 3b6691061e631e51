"""Evaluation metrics: ESS, efficiency, marginal accuracy and RMSE tables."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

GRID_POINTS = 512
GRID_HALF_WIDTH = 6.0


def ess_is(weights) -> float:
    """Kong's effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(w > 0):
        raise ValueError("all weights are zero")
    w = w / w.max()
    return float(w.sum() ** 2 / (w ** 2).sum())


def ess_is_log(log_weights) -> float:
    """ESS from log weights, stable when raw weights under/overflow."""
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        raise ValueError("all weights are zero")
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def efficiency(log_weights) -> float:
    lw = np.asarray(log_weights, dtype=float)
    return ess_is_log(lw) / lw.size


def _autocorr(x):
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n]
    return acov / acov[0]


def ess_mc(chain) -> float:
    """Autocorrelation-adjusted ESS, minimum over dimensions.

    The autocorrelation sum is truncated with Geyer's initial positive
    sequence; the result is clamped to [1, n].
    """
    chain = np.asarray(chain, dtype=float)
    if chain.ndim == 1:
        chain = chain[:, None]
    n = chain.shape[0]
    if n < 10:
        raise ValueError("need at least 10 draws")
    out = []
    for x in chain.T:
        if np.var(x) == 0.0:
            raise ValueError("degenerate chain: zero variance")
        rho = _autocorr(x)
        # pairs Gamma_m = rho_{2m} + rho_{2m+1}, stop at first non-positive pair
        tau = -1.0
        for m in range(n // 2):
            pair = rho[2 * m] + rho[2 * m + 1]
            if pair <= 0:
                break
            tau += 2.0 * pair
        out.append(min(max(n / tau, 1.0), float(n)) if tau > 0 else float(n))
    return float(min(out))


def _weighted_kde(points, w, bandwidth, grid, chunk=4096):
    dens = np.zeros_like(grid)
    for s in range(0, points.size, chunk):
        z = (grid[:, None] - points[None, s:s + chunk]) / bandwidth
        dens += np.exp(-0.5 * z * z) @ w[s:s + chunk]
    return dens / (bandwidth * math.sqrt(2.0 * math.pi))


def weighted_moments_1d(x, w):
    w = w / w.sum()
    m = w @ x
    return m, math.sqrt(max(w @ (x - m) ** 2, 0.0))


def marginal_accuracy(points, weights, reference_density, dim_index: int | None = None) -> float:
    """1 - 0.5 * L1 distance between a weighted Gaussian KDE and a reference marginal.

    ``points`` is a 1-D array or a sample matrix (then ``dim_index`` picks
    the column).  The bandwidth follows Silverman's rule with the ESS as
    sample size.  Both curves integrate to one, so the L1 term is computed
    as ``2 - 2 * int min(p, p_hat)`` on a grid of the weighted mean +- 6 SD;
    mass of the reference outside the grid then counts as disagreement.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 2:
        x = x[:, dim_index]
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    m_eff = ess_is(w)
    if m_eff < 10:
        raise ValueError("too few effective samples for KDE")
    mean, sd = weighted_moments_1d(x, w)
    h = 1.06 * sd * m_eff ** (-0.2)
    grid = np.linspace(mean - GRID_HALF_WIDTH * sd, mean + GRID_HALF_WIDTH * sd, GRID_POINTS)
    est = _weighted_kde(x, w, h, grid)
    ref = np.asarray(reference_density(grid), dtype=float)
    overlap = _trapezoid(np.minimum(ref, est), grid)
    return float(min(max(overlap, 0.0), 1.0))


def moment_estimates(points, log_weights):
    """Self-normalised mean and variance per dimension and c_hat = mean raw weight."""
    X = np.asarray(points, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    lse = logsumexp(lw)
    wn = np.exp(lw - lse)
    mean = wn @ X
    var = wn @ (X - mean) ** 2
    c_hat = math.exp(lse - math.log(lw.size))
    return mean, var, c_hat


def c_hat_standard_error(log_weights) -> tuple[float, float]:
    """(log c_hat, relative standard error of c_hat) from i.i.d.-style weights."""
    lw = np.asarray(log_weights, dtype=float)
    n = lw.size
    w = np.exp(lw - lw.max())
    mean = w.mean()
    se = w.std(ddof=1) / math.sqrt(n)
    return float(math.log(mean) + lw.max()), float(se / mean)


@dataclass
class ReferenceMoments:
    mean: np.ndarray
    variance: np.ndarray
    c_true: float
    provenance: str

    def to_dict(self):
        return {"mean": np.asarray(self.mean).tolist(), "variance": np.asarray(self.variance).tolist(),
                "c_true": self.c_true, "provenance": self.provenance}


@dataclass
class DiagnosticsReport:
    efficiency: float
    ess: float
    marginal_accuracy: dict = field(default_factory=dict)
    moment_rmse: dict = field(default_factory=dict)
    c_hat: float | None = None
    log_c_hat: float | None = None
    c_hat_rel_se: float | None = None
    mean: list | None = None
    variance: list | None = None
    caveats: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0 + 1e-12:
            raise ValueError("efficiency must lie in [0, 1]")
        for v in self.marginal_accuracy.values():
            if not 0.0 <= v <= 1.0:
                raise ValueError("marginal accuracy must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


def rmse_table(estimates: list[dict], reference: dict) -> dict:
    """RMSE and squared-bias / MSE ratio per quantity over replications.

    ``estimates`` holds one dict per replication (quantity -> scalar or
    vector); vector quantities are scored per component and averaged.
    A zero MSE gives a NaN ratio (the 0/0 sentinel).
    """
    if len(estimates) < 2:
        raise ValueError("need at least two replications")
    table = {}
    for key, ref in reference.items():
        vals = np.array([np.asarray(e[key], dtype=float) for e in estimates])
        ref = np.asarray(ref, dtype=float)
        err = vals - ref
        mse = np.mean(err ** 2, axis=0)
        bias2 = np.mean(err, axis=0) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(mse > 0, bias2 / np.where(mse > 0, mse, 1.0), np.nan)
        table[key] = {"rmse": float(np.mean(np.sqrt(mse))),
                      "bias2_over_mse": float(np.mean(ratio)) if np.all(np.isfinite(ratio)) else float("nan")}
    return table


def write_table_csv(path, rows: list[dict], fieldnames: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)
