"""Experiment runner: targets, replications, diagnostics and persisted results.

A run directory holds

    config.json        every setting actually used (defaults included)
    meta.json          timestamps and library versions; the only non-deterministic file
    reference.json     ground-truth moments the RMSEs are scored against
    rep_000.json ...   per-replication diagnostics
    rep_000.npz ...    per-replication samples (and mixture parameters)
    summary.csv        aggregate table: metric, value, bias2_over_mse, minimum
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import platform
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy
from scipy.special import logsumexp

from .data import load_sonar
from .diagnostics import (DiagnosticsReport, ReferenceMoments, c_hat_standard_error, ess_is_log,
                          ess_mc, marginal_accuracy, moment_estimates, rmse_table)
from .gaussflow import FlowConfig, FlowError, flow_to_t1, write_trajectory_csv
from .mixture import ImportanceMixture, StudentTComponent, WeightedSampleSet
from .samplers import (IterationError, SamplerConfig, SamplerRunResult, find_modes,
                       laplace_t_mixture, make_rng, newton_mode, run_limis, run_mala,
                       run_nimis, run_plain_is)
from .targets import (IS_MODE_WEIGHTS, WARPED_A, WARPED_B, WARPED_S1, WARPED_S2, WARPED_WEIGHTS,
                      GaussianTarget, LogisticPosteriorTarget, marginal_density,
                      warped_mixture_target)
from .tuning import (CostModel, TuningProblem, cost_curve, mixture_efficiency, optimize_t1,
                     rebuild_mixture_at)

log = logging.getLogger(__name__)

EXPERIMENTS = ("mixture_5d", "mixture_20d", "mixture_80d", "logistic_sonar", "tune_t1",
               "gaussian_sanity")
METHODS = ("limis", "nimis", "is", "mala")
MIXTURE_T1 = {5: 1.0, 20: 3.0, 80: 5.0}
# (n0 per dim, b per dim, k); logistic uses its own k
SCALES = {"desk": (100, 20, 50), "paper": (1000, 100, 200)}
LOGISTIC_K = {"desk": 25, "paper": 100}
SANITY_DIM = 5


@dataclass
class ExperimentConfig:
    experiment: str
    method: str = "limis"
    scale: str = "desk"
    replications: int = 1
    seed: int = 0
    t1: float | None = None
    lam: float = 28.0
    output_dir: str = "results"
    n0: int | None = None
    b: int | None = None
    k: int | None = None
    dof: float | None = None
    workers: int = 1
    t_parametrization: str = "scale"
    mala_init: str = "prior"  # or "mode"
    sonar_path: str | None = None
    reference_runs: int = 4  # pooled LIMIS runs behind the logistic reference
    criterion: str = "auto"  # tune_t1 only
    cost_c_pi: float = 6.0
    cost_c_q: float = 1.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.scale not in SCALES:
            raise ValueError("scale must be 'desk' or 'paper'")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.mala_init not in ("prior", "mode"):
            raise ValueError("mala_init must be 'prior' or 'mode'")
        if self.experiment == "tune_t1" and self.method != "limis":
            raise ValueError("tune_t1 needs method limis")

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}

    def to_dict(self):
        return asdict(self)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments are skipped."""
    out = {}
    types = ExperimentConfig.field_types()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{n}: unknown key {key!r}")
            out[key] = _coerce(val, types[key])
    return out


def _coerce(val: str, typ: str):
    if val.lower() in ("none", "null", ""):
        return None
    if typ.startswith("int"):
        return int(val)
    if typ.startswith("float"):
        return float(val)
    return val


# ---------------------------------------------------------------- settings


@dataclass
class Setting:
    """Everything a replication needs, derived from an ExperimentConfig."""

    target: object
    prior: object
    is_proposal: object
    sampler: SamplerConfig
    reference: ReferenceMoments | None
    ma_dims: tuple
    quantities: str  # "mixture" or "logistic" RMSE layout
    dim: int
    notes: list = field(default_factory=list)


def experiment_dim(config: ExperimentConfig) -> int:
    e = config.experiment
    if e.startswith("mixture_"):
        return int(e.split("_")[1][:-1])
    if e == "tune_t1":
        return 5
    if e == "gaussian_sanity":
        return SANITY_DIM
    return 61


def resolved_counts(config: ExperimentConfig, dim: int):
    n0_per, b_per, k = SCALES[config.scale]
    notes = []
    if config.experiment == "logistic_sonar":
        k = LOGISTIC_K[config.scale]
    elif config.experiment == "tune_t1":
        # the pilot needs the default per-dimension sample sizes to find every mode
        n0_per, b_per, k = 1000, 100, 50
        notes.append("tune_t1 pilots use n0=1000d, b=100d, k=50 at either scale")
    elif config.experiment == "gaussian_sanity":
        # EF is capped near 1 - n0/n_k, so the prior share is kept at about 1%
        n0_per, b_per, k = 2, 40, 5
        notes.append("gaussian_sanity uses n0=2d, b=40d, k=5, dof=1e3")
    n0 = config.n0 or n0_per * dim
    b = config.b or b_per * dim
    k = config.k if config.k is not None else k
    notes.append(f"scale={config.scale}: n0={n0}, b={b}, k={k}")
    return n0, b, k, notes


def sanity_gaussian(dim: int = SANITY_DIM) -> GaussianTarget:
    rng = np.random.default_rng(20170213)
    A = rng.standard_normal((dim, dim))
    S = A @ A.T / dim + 0.5 * np.eye(dim)
    return GaussianTarget(rng.uniform(-2.0, 2.0, dim), S)


def mixture_reference(dim: int) -> ReferenceMoments:
    """Exact mean and variance of the warped mixture, per coordinate."""
    w = np.asarray(WARPED_WEIGHTS) / np.sum(WARPED_WEIGHTS)
    a, b = np.asarray(WARPED_A), np.asarray(WARPED_B)
    m1, v1 = np.asarray(WARPED_S1), a ** 2
    # x2 = y2 - b (y1^2 - a^2) + s2 with Var(y1^2) = 2 a^4
    m2, v2 = np.asarray(WARPED_S2), 1.0 + 2.0 * b ** 2 * a ** 4
    mean = np.zeros(dim)
    var = np.ones(dim)
    for i, (m, v) in enumerate([(m1, v1), (m2, v2)]):
        mean[i] = w @ m
        var[i] = w @ (v + m ** 2) - mean[i] ** 2
    return ReferenceMoments(mean, var, 1.0, "closed form per warped component, mixed by weight")


def build_setting(config: ExperimentConfig, reference=True) -> Setting:
    dim = experiment_dim(config)
    n0, b, k, notes = resolved_counts(config, dim)
    par = config.t_parametrization
    dof = config.dof or (1e3 if config.experiment == "gaussian_sanity" else 3.0)
    e = config.experiment
    if e.startswith("mixture_") or e == "tune_t1":
        target = warped_mixture_target(dim)
        t1 = config.t1 or MIXTURE_T1.get(dim, 1.0)
        prior = StudentTComponent.build(np.zeros(dim), 100.0 * np.eye(dim), 3.0, par)
        modes = find_modes(target)
        is_q = laplace_t_mixture(target, modes, IS_MODE_WEIGHTS[:len(modes)], 3.0, par)
        ref = mixture_reference(dim)
        ma_dims, quantities = (0, 1), "mixture"
    elif e == "gaussian_sanity":
        target = sanity_gaussian(dim)
        t1 = config.t1 or 50.0
        prior = StudentTComponent.build(np.zeros(dim), 100.0 * np.eye(dim), 3.0, par)
        is_q = laplace_t_mixture(target, [target.mean], None, 3.0, par)
        ref = ReferenceMoments(target.mean, np.diag(target.cov), 1.0, "exact Gaussian")
        ma_dims, quantities = (0, 1), "mixture"
    else:
        ds = load_sonar(config.sonar_path)
        target = LogisticPosteriorTarget(ds.design(), ds.labels, config.lam)
        t1 = config.t1 or 1.0
        mode = newton_mode(target, np.zeros(dim))
        is_q = laplace_t_mixture(target, [mode], None, 3.0, par)
        prior = is_q.components[0]
        ref = None
        ma_dims, quantities = (), "logistic"
        notes.append(f"sonar file {ds.source}, standardised with population variance")
    sampler = SamplerConfig(n0=n0, b=b, k=k, dof=dof, flow=FlowConfig(t1=t1), t_parametrization=par)
    s = Setting(target, prior, is_q, sampler, ref, ma_dims, quantities, dim, notes)
    if reference and ref is None:
        s.reference = logistic_reference(s, config)
    return s


def logistic_reference(setting: Setting, config: ExperimentConfig) -> ReferenceMoments:
    """Pooled weighted samples of several independent LIMIS runs."""
    pts, lws = [], []
    for i in range(config.reference_runs):
        r = run_limis(setting.target, setting.prior, setting.sampler,
                      make_rng(config.seed, 1_000_000 + i))
        pts.append(r.samples.points)
        lws.append(r.samples.log_weights)
    X, lw = np.concatenate(pts), np.concatenate(lws)
    mean, var, _ = moment_estimates(X, lw)
    log_c = float(logsumexp(lw) - math.log(lw.size))
    return ReferenceMoments(mean, var, log_c,
                            f"{config.reference_runs} pooled LIMIS runs; c_true holds log c")


# ---------------------------------------------------------------- replications


def _mixture_state(result: SamplerRunResult) -> dict:
    out = {}
    if isinstance(result.mixture, ImportanceMixture):
        out["mixture_json"] = np.array(result.mixture.to_json())
    if result.centers is not None:
        out["centers"] = result.centers
        out["step_sizes"] = result.step_sizes
    if result.per_iteration_efficiency.size:
        out["per_iteration_efficiency"] = result.per_iteration_efficiency
    return out


def _samples_arrays(samples: WeightedSampleSet) -> dict:
    out = {"points": samples.points, "log_target": samples.log_target,
           "log_proposal": samples.log_proposal, "origin": samples.origin}
    if samples.log_prior is not None:
        out.update(log_prior=samples.log_prior, log_comp_sum=samples.log_comp_sum,
                   n_cached=samples.n_cached)
    return out


def run_method(setting: Setting, config: ExperimentConfig, rng) -> SamplerRunResult:
    m = config.method
    n_total = setting.sampler.n0 + setting.sampler.k * setting.sampler.b
    if m == "limis":
        return run_limis(setting.target, setting.prior, setting.sampler, rng)
    if m == "nimis":
        return run_nimis(setting.target, setting.prior, setting.sampler, rng)
    if m == "is":
        return run_plain_is(setting.target, setting.is_proposal, n_total, rng)
    if config.mala_init == "prior":
        x0 = setting.prior.sample(1, rng)[0]
    else:
        x0 = setting.is_proposal.components[0].location
    return run_mala(setting.target, x0, n_total, setting.sampler, rng)


def _quantities(setting: Setting, mean, var, c_value) -> dict:
    if setting.quantities == "mixture":
        q = {"sum_mean_x3_plus": float(np.sum(mean[2:])), "sum_var_x3_plus": float(np.sum(var[2:]))}
    else:
        q = {"mean": np.asarray(mean).tolist(), "sd": np.sqrt(var).tolist()}
    if c_value is not None:
        q["normalizing_constant"] = float(c_value)
    return q


def reference_quantities(setting: Setting) -> dict:
    ref = setting.reference
    q = _quantities(setting, ref.mean, ref.variance, None)
    q["normalizing_constant"] = 1.0  # c itself, or c relative to the logistic reference
    return q


def diagnose(setting: Setting, result: SamplerRunResult, config: ExperimentConfig) -> dict:
    caveats = []
    if result.samples is not None:
        X = result.samples.points
        lw = result.samples.log_weights
        w = np.exp(lw - lw.max())
        mean, var, c_hat = moment_estimates(X, lw)
        log_c, rel_se = c_hat_standard_error(lw)
        ess = ess_is_log(lw)
        ef = ess / lw.size
        if setting.quantities == "logistic":
            c_value = math.exp(log_c - setting.reference.c_true)
        else:
            c_value = c_hat
    else:
        X = result.chain
        w = np.ones(X.shape[0])
        mean, var = X.mean(axis=0), X.var(axis=0)
        c_hat = log_c = rel_se = c_value = None
        ess = ess_mc(X)
        ef = ess / X.shape[0]
        if setting.quantities == "mixture" and config.experiment != "gaussian_sanity":
            caveats.append("mala_efficiency_multimodal: autocorrelation ESS is misleading "
                           "on a multimodal target")
    ma = {}
    for i in setting.ma_dims:
        try:
            ma[f"x{i + 1}"] = marginal_accuracy(X, w, marginal_density(setting.target, i), i)
        except ValueError as exc:
            caveats.append(f"MA(x{i + 1}) unavailable: {exc}")
    report = DiagnosticsReport(
        efficiency=float(min(ef, 1.0)), ess=float(ess), marginal_accuracy=ma, c_hat=c_hat,
        log_c_hat=log_c, c_hat_rel_se=rel_se, mean=np.asarray(mean).tolist(),
        variance=np.asarray(var).tolist(), caveats=caveats)
    out = report.to_dict()
    out["quantities"] = _quantities(setting, mean, var, c_value)
    if result.acceptance_rate is not None:
        out["acceptance_rate"] = result.acceptance_rate
        out["mala_step"] = result.mala_step
    if result.per_iteration_efficiency.size:
        out["per_iteration_efficiency"] = result.per_iteration_efficiency.tolist()
    if result.step_sizes is not None:
        out["step_sizes"] = result.step_sizes.tolist()
    return out


def _tune_replication(setting: Setting, config: ExperimentConfig, result, rep: int) -> dict:
    t1_initial = setting.sampler.flow.t1
    problem = TuningProblem(setting.target, result, t1_initial, config.criterion,
                            t_parametrization=config.t_parametrization)
    tr = optimize_t1(problem, make_rng(config.seed, 2_000_000 + rep))
    n = len(result.samples)
    rng = make_rng(config.seed, 3_000_000 + rep)
    ef_initial = mixture_efficiency(setting.target, result.mixture, n, rng)
    ef_star = mixture_efficiency(setting.target, rebuild_mixture_at(problem, tr.t1_star), n, rng)
    out = tr.to_dict()
    out.update(ef_initial=ef_initial, ef_star=ef_star, evaluation_samples=n)
    return out


def run_replication(config: ExperimentConfig, rep: int, setting: Setting | None = None):
    """One seeded replication -> (report, arrays); sampler failures are recorded, not raised."""
    if setting is None:
        setting = build_setting(config, reference=False)
    rng = make_rng(config.seed, rep)
    try:
        result = run_method(setting, config, rng)
    except (IterationError, FlowError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return {"replication": rep, "error": f"{type(exc).__name__}: {exc}"}, {}
    out = {"replication": rep, "method": config.method}
    if setting.reference is not None:
        out.update(diagnose(setting, result, config))
    if config.experiment == "tune_t1":
        out["tuning"] = _tune_replication(setting, config, result, rep)
    arrays = _mixture_state(result)
    if result.samples is not None:
        arrays.update(_samples_arrays(result.samples))
    else:
        arrays["chain"] = result.chain
    return out, arrays


def _replication_worker(args):
    config, rep, reference = args
    setting = build_setting(config, reference=False)
    setting.reference = reference
    return run_replication(config, rep, setting)


# ---------------------------------------------------------------- persistence


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"{type(o).__name__} is not JSON serialisable")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_npz(path, arrays: dict) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".npz")
    os.close(fd)
    try:
        np.savez_compressed(tmp, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_directory(config: ExperimentConfig) -> Path:
    return Path(config.output_dir) / f"{config.experiment}_{config.method}"


def aggregate(setting: Setting, reports: list[dict], experiment: str) -> list[dict]:
    ok = [r for r in reports if "error" not in r]
    rows = []
    if not ok:
        return [{"metric": "failed_replications", "value": len(reports), "bias2_over_mse": "",
                 "minimum": ""}]
    for key in sorted({k for r in ok for k in r.get("marginal_accuracy", {})}):
        vals = [r["marginal_accuracy"][key] for r in ok if key in r["marginal_accuracy"]]
        rows.append({"metric": f"MA({key})", "value": float(np.mean(vals)), "bias2_over_mse": "",
                     "minimum": float(np.min(vals))})
    if "quantities" in ok[0] and len(ok) >= 2:
        ref = reference_quantities(setting)
        ref = {k: v for k, v in ref.items() if k in ok[0]["quantities"]}
        table = rmse_table([r["quantities"] for r in ok], ref)
        for key, t in table.items():
            rows.append({"metric": f"RMSE[{key}]", "value": t["rmse"],
                         "bias2_over_mse": t["bias2_over_mse"], "minimum": ""})
    if "efficiency" in ok[0]:
        effs = [r["efficiency"] for r in ok]
        rows.append({"metric": "efficiency", "value": float(np.mean(effs)), "bias2_over_mse": "",
                     "minimum": float(np.min(effs))})
    if experiment == "tune_t1":
        t = [r["tuning"] for r in ok]
        for key in ("t1_star", "ef_initial", "ef_star"):
            v = [x[key] for x in t]
            rows.append({"metric": key, "value": float(np.mean(v)), "bias2_over_mse": "",
                         "minimum": float(np.min(v))})
    rows.append({"metric": "failed_replications", "value": len(reports) - len(ok),
                 "bias2_over_mse": "", "minimum": ""})
    return rows


def _csv_text(rows, fieldnames) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def run_experiment(config: ExperimentConfig) -> Path:
    """Run every replication of ``config`` and write the run directory."""
    started = time.time()
    out = run_directory(config)
    out.mkdir(parents=True, exist_ok=True)
    setting = build_setting(config)
    cfg = config.to_dict()
    cfg.update(dim=setting.dim, n0=setting.sampler.n0, b=setting.sampler.b, k=setting.sampler.k,
               t1=setting.sampler.flow.t1, dof=setting.sampler.dof, notes=setting.notes)
    atomic_write_text(out / "config.json", dumps(cfg))
    if setting.reference is not None:
        atomic_write_text(out / "reference.json", dumps(setting.reference.to_dict()))
    reps = range(config.replications)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_replication_worker,
                                    [(config, r, setting.reference) for r in reps]))
    else:
        results = [run_replication(config, r, setting) for r in reps]
    reports = []
    for rep, (report, arrays) in zip(reps, results):
        atomic_write_text(out / f"rep_{rep:03d}.json", dumps(report))
        if arrays:
            atomic_write_npz(out / f"rep_{rep:03d}.npz", arrays)
        if "error" in report:
            log.warning("replication %d failed: %s", rep, report["error"])
        reports.append(report)
    rows = aggregate(setting, reports, config.experiment)
    atomic_write_text(out / "summary.csv",
                      _csv_text(rows, ["metric", "value", "bias2_over_mse", "minimum"]))
    meta = {"started": started, "finished": time.time(), "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}
    atomic_write_text(out / "meta.json", dumps(meta))
    return out


# ---------------------------------------------------------------- reloading and tuning


def load_config(run_dir) -> ExperimentConfig:
    data = json.loads((Path(run_dir) / "config.json").read_text(encoding="utf-8"))
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in data.items() if k in names})


def load_replication(run_dir, rep: int, setting: Setting) -> SamplerRunResult:
    z = np.load(Path(run_dir) / f"rep_{rep:03d}.npz")
    samples = WeightedSampleSet(z["points"], z["log_target"], z["log_proposal"], z["origin"],
                                z["log_prior"] if "log_prior" in z else None,
                                z["log_comp_sum"] if "log_comp_sum" in z else None,
                                z["n_cached"] if "n_cached" in z else None)
    mixture = None
    if "mixture_json" in z:
        mixture = ImportanceMixture.from_json(str(z["mixture_json"]))
    return SamplerRunResult("limis", samples, mixture,
                            z["per_iteration_efficiency"] if "per_iteration_efficiency" in z
                            else np.zeros(0),
                            None, z["centers"] if "centers" in z else None,
                            z["step_sizes"] if "step_sizes" in z else None)


def replication_ids(run_dir) -> list[int]:
    return sorted(int(p.stem.split("_")[1]) for p in Path(run_dir).glob("rep_*.npz"))


def tune_from_pilot(pilot_dir, criterion: str = "auto", out_dir=None) -> Path:
    """Optimise t1 for every stored LIMIS replication in ``pilot_dir``."""
    pilot_dir = Path(pilot_dir)
    config = load_config(pilot_dir)
    if config.method != "limis":
        raise ValueError(f"{pilot_dir} holds {config.method} runs; t1 tuning needs LIMIS pilots")
    config.criterion = criterion
    setting = build_setting(config, reference=False)
    out_dir = Path(out_dir) if out_dir else pilot_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    ids = replication_ids(pilot_dir)
    if not ids:
        raise FileNotFoundError(f"no rep_*.npz files in {pilot_dir}")
    for rep in ids:
        result = load_replication(pilot_dir, rep, setting)
        tr = _tune_replication(setting, config, result, rep)
        atomic_write_text(out_dir / f"tuning_{rep:03d}.json", dumps(tr))
        rows.append(tr)
    summary = {"t1_initial": setting.sampler.flow.t1, "criterion": rows[0]["criterion"],
               "t1_star": [r["t1_star"] for r in rows], "ef_initial": [r["ef_initial"] for r in rows],
               "ef_star": [r["ef_star"] for r in rows]}
    atomic_write_text(out_dir / "tuning_summary.json", dumps(summary))
    return out_dir


# ---------------------------------------------------------------- plot data


def _run_dirs(results_dir):
    return sorted(p.parent for p in Path(results_dir).glob("*/config.json"))


def emit_plot_data(results_dir, out_dir=None) -> dict:
    """Write plot-ready CSVs from completed runs; returns {name: path or reason}."""
    results_dir = Path(results_dir)
    runs = _run_dirs(results_dir)
    status = {}
    if not runs:
        status["message"] = f"no completed runs under {results_dir}; nothing written"
        return status
    out_dir = Path(out_dir) if out_dir else results_dir / "plot_data"
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = {d: load_config(d) for d in runs}
    limis = [d for d, c in configs.items() if c.method == "limis" and replication_ids(d)
             and c.experiment != "gaussian_sanity"]

    # flow trajectory from the first stored centre of a LIMIS run
    if limis:
        d = limis[0]
        setting = build_setting(configs[d], reference=False)
        res = load_replication(d, replication_ids(d)[0], setting)
        traj = []
        flow_to_t1(setting.target, res.centers[0], setting.sampler.flow, step=res.step_sizes[0],
                   trajectory=traj)
        path = out_dir / "flow_trajectory.csv"
        write_trajectory_csv(path, traj)
        status["flow_trajectory"] = str(path)
    else:
        status["flow_trajectory"] = "absent: needs a LIMIS run directory"

    # density slices over (x1, x2), remaining coordinates at zero
    mix_runs = [d for d, c in configs.items() if c.experiment.startswith("mixture_")
                and c.method in ("limis", "nimis") and replication_ids(d)]
    if mix_runs:
        for dim in sorted({experiment_dim(configs[d]) for d in mix_runs}):
            group = [d for d in mix_runs if experiment_dim(configs[d]) == dim]
            g1 = np.linspace(-15.0, 15.0, 121)
            g2 = np.linspace(-12.0, 14.0, 105)
            G1, G2 = np.meshgrid(g1, g2, indexing="ij")
            P = np.zeros((G1.size, dim))
            P[:, 0], P[:, 1] = G1.ravel(), G2.ravel()
            cols = {"x1": P[:, 0], "x2": P[:, 1],
                    "log_target": warped_mixture_target(dim).log_density(P)}
            for d in group:
                mix = ImportanceMixture.from_json(
                    str(np.load(d / f"rep_{replication_ids(d)[0]:03d}.npz")["mixture_json"]))
                cols[f"log_q_{configs[d].method}"] = mix.log_density(P)
            path = out_dir / f"density_slice_{dim}d.csv"
            names = list(cols)
            rows = [{n: repr(float(cols[n][i])) for n in names} for i in range(P.shape[0])]
            atomic_write_text(path, _csv_text(rows, names))
            status[f"density_slice_{dim}d"] = str(path)
    else:
        status["density_slice"] = "absent: needs LIMIS or NIMIS mixture_* runs"

    # cost per independent sample, averaged over replications
    cost_rows = []
    for d, c in configs.items():
        if c.method not in ("limis", "nimis"):
            continue
        curves = []
        for rep in replication_ids(d):
            rj = json.loads((d / f"rep_{rep:03d}.json").read_text(encoding="utf-8"))
            if "per_iteration_efficiency" in rj:
                model = CostModel(c.cost_c_pi, c.cost_c_q, rj["per_iteration_efficiency"])
                curves.append(np.log(cost_curve(model)))
        if curves:
            n = min(len(x) for x in curves)
            mean = np.mean([x[:n] for x in curves], axis=0)
            for j in range(n):
                cost_rows.append({"scenario": f"{c.experiment}_{c.method}", "j": j + 1,
                                  "mean_log_cost": repr(float(mean[j]))})
    if cost_rows:
        path = out_dir / "cost_curves.csv"
        atomic_write_text(path, _csv_text(cost_rows, ["scenario", "j", "mean_log_cost"]))
        status["cost_curves"] = str(path)
    else:
        status["cost_curves"] = "absent: needs LIMIS or NIMIS runs with per-iteration efficiency"

    # t1_I versus t1_star
    tune_rows = []
    for d, c in configs.items():
        tunes = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(d.glob("tuning_*.json"))
                 if p.name != "tuning_summary.json"]
        if not tunes:
            reps = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(d.glob("rep_*.json"))]
            tunes = [r["tuning"] for r in reps if "tuning" in r]
        if tunes:
            ts = np.array([t["t1_star"] for t in tunes])
            tune_rows.append({"t1_initial": tunes[0]["t1_initial"], "mean_t1_star": float(ts.mean()),
                              "sd_t1_star": float(ts.std(ddof=1)) if ts.size > 1 else 0.0,
                              "ef_initial": float(np.mean([t["ef_initial"] for t in tunes])),
                              "ef_star": float(np.mean([t["ef_star"] for t in tunes])),
                              "runs": ts.size})
    if tune_rows:
        tune_rows.sort(key=lambda r: r["t1_initial"])
        path = out_dir / "tuning_table.csv"
        atomic_write_text(path, _csv_text(tune_rows, ["t1_initial", "mean_t1_star", "sd_t1_star",
                                                      "ef_initial", "ef_star", "runs"]))
        status["tuning_table"] = str(path)
    else:
        status["tuning_table"] = "absent: needs tune_t1 runs or tune-t1 output"

    # Table 1 / Table 2 layout across methods
    table_rows = []
    for d, c in configs.items():
        s = d / "summary.csv"
        if s.exists():
            with open(s, encoding="utf-8") as fh:
                for r in csv.DictReader(fh):
                    table_rows.append({"experiment": c.experiment, "method": c.method, **r})
    if table_rows:
        path = out_dir / "tables.csv"
        atomic_write_text(path, _csv_text(table_rows, ["experiment", "method", "metric", "value",
                                                       "bias2_over_mse", "minimum"]))
        status["tables"] = str(path)
    return status
