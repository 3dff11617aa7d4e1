"""Monte-Carlo replications of the inference and error-decay experiments."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import LearningRate, TraceSink, averaged_iterate, run
from .errors import DegenerateSeries, ReplicationFailed, RegimeWarning
from .inference import (
    CovAccumulator,
    CovarianceSink,
    InferenceConfig,
    adjusted_hessian,
    covdiff,
    multi_run_covariance,
    normal_quantile,
    proxpr_ci,
    proxpr_sandwich,
    proxrm_ci,
    proxrm_covariance,
)
from .model import (
    CovarianceSpec,
    LinearRegression,
    LinearRegressionStream,
    QuadraticToy,
    QuarticToy,
    ScalarNormalStream,
    SmoothedQuantile,
)

EXPERIMENTS = ("linreg", "quantile", "decay_quadratic", "decay_quartic")


def default_gamma1(experiment, gamma):
    if experiment == "linreg":
        return 10.0
    if experiment == "quantile":
        return 250.0 if gamma == 1.0 else 30.0
    return 5.0


@dataclass
class ExperimentConfig:
    experiment: str
    p: int = 5
    sigma: str = "identity"
    rho: float | None = None
    gamma1: float | None = None
    gamma: float = 0.6
    n_iters: int = 100_000
    reps: int = 100
    theta0: float | None = None
    burn_in_fraction: float | None = None
    delta: float | None = None
    ci_alpha: float = 0.05
    base_seed: int = 0
    alpha_q: float = 0.99
    mu: float = 0.01
    noise_sd: float = 4.0
    group_size: int = 50
    regime_warnings: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n_iters < 10:
            raise ValueError("n_iters must be >= 10")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")
        if self.experiment != "linreg":
            self.p = 1
        if self.gamma1 is None:
            self.gamma1 = default_gamma1(self.experiment, self.gamma)
        if self.theta0 is None:
            self.theta0 = {"decay_quadratic": 10.0, "decay_quartic": 2.0}.get(self.experiment, 0.0)
        if self.burn_in_fraction is None:
            self.burn_in_fraction = 0.0 if self.is_decay else 0.1
        if not self.is_decay:
            if not 0.5 < self.gamma <= 1.0:
                self.regime_warnings.append(
                    f"exponent {self.gamma} outside (1/2, 1]: raw-iterate intervals are not backed by theory")
            if not 0.5 < self.gamma < 1.0:
                self.regime_warnings.append(
                    f"exponent {self.gamma} outside (1/2, 1): averaged-iterate intervals are not backed by theory")
        for msg in self.regime_warnings:
            warnings.warn(msg, RegimeWarning, stacklevel=2)

    @property
    def is_decay(self):
        return self.experiment.startswith("decay")

    def model(self):
        if self.experiment == "linreg":
            return LinearRegression(self.p)
        if self.experiment == "quantile":
            return SmoothedQuantile(self.alpha_q, self.mu)
        if self.experiment == "decay_quadratic":
            return QuadraticToy()
        return QuarticToy()

    def covariance(self):
        return CovarianceSpec(self.sigma, self.p, self.rho)

    def theta_star(self):
        if self.experiment == "linreg":
            return np.ones(self.p)
        if self.experiment == "quantile":
            # unsmoothed quantile; the smoothed loss has a slightly different minimizer
            return np.array([normal_quantile(self.alpha_q)])
        return np.zeros(1)

    def stream(self):
        if self.experiment == "linreg":
            return LinearRegressionStream(self.covariance(), self.theta_star())
        if self.experiment == "quantile":
            return ScalarNormalStream(1.0)
        return ScalarNormalStream(self.noise_sd)

    def learning_rate(self):
        return LearningRate(self.gamma1, self.gamma)

    def inference_config(self):
        return InferenceConfig(self.gamma1, self.gamma, self.delta, self.ci_alpha)

    def seeds(self):
        return [self.base_seed + r for r in range(self.reps)]

    def to_dict(self):
        d = asdict(self)
        d.pop("regime_warnings")
        if self.experiment == "linreg":
            d["rho"] = self.covariance().rho
        d["delta"] = self.inference_config().delta
        return d


def paper_scale(experiment, **overrides):
    """Configurations at the replication counts and run lengths of the
    original study."""
    base = {
        "linreg": dict(n_iters=100_000, reps=500),
        "quantile": dict(n_iters=1_000_000, reps=500),
        "decay_quadratic": dict(n_iters=1_000_000, reps=100),
        "decay_quartic": dict(n_iters=1_000_000, reps=100),
    }[experiment]
    base.update(overrides)
    return ExperimentConfig(experiment, **base)


@dataclass
class ReplicationResult:
    index: int
    seed: int
    theta_final: np.ndarray
    theta_bar: np.ndarray
    ci_rm: np.ndarray
    ci_pr: np.ndarray
    cover_rm: np.ndarray
    cover_pr: np.ndarray
    sqerr_rm: float
    sqerr_pr: float
    len_rm: np.ndarray
    len_pr: np.ndarray
    sigma_rm: np.ndarray
    sandwich: np.ndarray
    n: int
    n_effective: int


@dataclass
class MethodSummary:
    cover: float
    mse: float
    mse_unnormalized: float
    len_ci: float
    covdiff: float
    covdiff_raw: float


@dataclass
class Report:
    config: ExperimentConfig
    rm: MethodSummary
    pr: MethodSummary
    replications: list
    multi_run_rm: np.ndarray | None
    multi_run_pr: np.ndarray | None
    metadata: dict


def _groups(cfg):
    return [range(s, min(s + cfg.group_size, cfg.reps)) for s in range(0, cfg.reps, cfg.group_size)]


def _map_groups(fn, groups, threads):
    if threads and threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, groups))
    return [fn(g) for g in groups]


def _run_group(cfg: ExperimentConfig, indices, sinks_factory=None):
    rngs = [np.random.default_rng(cfg.base_seed + r) for r in indices]
    sinks = sinks_factory(len(rngs)) if sinks_factory else []
    try:
        state = run(cfg.model(), cfg.stream(), cfg.learning_rate(), cfg.n_iters, cfg.theta0,
                    cfg.burn_in_fraction, rngs, sinks)
    except Exception as exc:
        # the batch shares one failure; report the first replication of the group
        raise ReplicationFailed(indices[0], exc) from exc
    return state, sinks


def _inference_group(cfg: ExperimentConfig, indices):
    model = cfg.model()
    acc = CovAccumulator.empty(cfg.p, (len(indices),))
    state, _ = _run_group(cfg, indices, lambda b: [CovarianceSink(model, acc)])
    icfg = cfg.inference_config()
    theta_star = cfg.theta_star()
    theta_bar = averaged_iterate(state)
    out = []
    for b, r in enumerate(indices):
        try:
            acc_b = acc.select(b)
            h_tilde = adjusted_hessian(acc_b, icfg.delta)
            sigma = proxrm_covariance(acc_b, icfg, h_tilde)
            sandwich = proxpr_sandwich(h_tilde, i_hat=acc_b.I_hat)
            ci_rm = proxrm_ci(state.theta[b], acc_b, icfg, state.n, sigma)
            ci_pr = proxpr_ci(theta_bar[b], acc_b, icfg, state.avg_count, sandwich, enforce_regime=False)
        except Exception as exc:
            raise ReplicationFailed(r, exc) from exc
        out.append(ReplicationResult(
            index=r,
            seed=cfg.base_seed + r,
            theta_final=state.theta[b].copy(),
            theta_bar=theta_bar[b].copy(),
            ci_rm=ci_rm,
            ci_pr=ci_pr,
            cover_rm=(ci_rm[:, 0] <= theta_star) & (theta_star <= ci_rm[:, 1]),
            cover_pr=(ci_pr[:, 0] <= theta_star) & (theta_star <= ci_pr[:, 1]),
            sqerr_rm=float(np.sum((state.theta[b] - theta_star) ** 2)),
            sqerr_pr=float(np.sum((theta_bar[b] - theta_star) ** 2)),
            len_rm=ci_rm[:, 1] - ci_rm[:, 0],
            len_pr=ci_pr[:, 1] - ci_pr[:, 0],
            sigma_rm=sigma,
            sandwich=sandwich,
            n=state.n,
            n_effective=state.avg_count,
        ))
    return out


def _summarize(reps, p, est, plug_ins, scales, multi):
    cover = 100.0 * float(np.mean(np.concatenate([c for c, _ in est])))
    sq = np.array([s for _, s in est])
    if multi is None:
        cd = cd_raw = float("nan")
    else:
        cd = float(np.mean([covdiff(m * s, multi, p) for m, s in zip(plug_ins, scales)]))
        cd_raw = float(np.mean([covdiff(m, multi, p) for m in plug_ins]))
    return cover, float(np.mean(sq)) / p, float(np.mean(sq)), cd, cd_raw


def run_replications(cfg: ExperimentConfig, threads=1) -> Report:
    """Run ``cfg.reps`` independent replications (seed ``base_seed + r``)
    and aggregate cover / MSE / lenCI / covdiff for both estimators."""
    if cfg.is_decay:
        raise ValueError("decay experiments produce traces; use decay_trace")
    groups = _groups(cfg)
    reps = [r for group in _map_groups(lambda g: _inference_group(cfg, g), groups, threads) for r in group]
    reps.sort(key=lambda r: r.index)
    p = cfg.p
    rate = 1.0 if cfg.gamma == 1.0 else cfg.gamma
    multi_rm = multi_run_covariance([r.theta_final for r in reps]) if len(reps) >= 2 else None
    multi_pr = multi_run_covariance([r.theta_bar for r in reps]) if len(reps) >= 2 else None

    cov, mse, mse_u, cd, cd_raw = _summarize(
        reps, p, [(r.cover_rm, r.sqerr_rm) for r in reps], [r.sigma_rm for r in reps],
        [r.n ** (-rate) for r in reps], multi_rm)
    rm = MethodSummary(cov, mse, mse_u, float(np.mean([r.len_rm for r in reps])), cd, cd_raw)
    cov, mse, mse_u, cd, cd_raw = _summarize(
        reps, p, [(r.cover_pr, r.sqerr_pr) for r in reps], [r.sandwich for r in reps],
        [1.0 / r.n_effective for r in reps], multi_pr)
    pr = MethodSummary(cov, mse, mse_u, float(np.mean([r.len_pr for r in reps])), cd, cd_raw)

    metadata = {
        "gamma1": cfg.gamma1,
        "delta": cfg.inference_config().delta,
        "theta_star": cfg.theta_star().tolist(),
        "regime_warnings": list(cfg.regime_warnings),
        "mse_definition": "mean over replications of |theta_hat - theta_star|^2 / p",
        "covdiff_scaling": "plug-in times n^-gamma (raw iterate) or 1/n_eff (average)",
    }
    if cfg.experiment == "quantile":
        metadata["smoothing_bias"] = (
            "coverage is measured against the unsmoothed quantile, which is not the minimizer of the smoothed risk")
    return Report(cfg, rm, pr, reps, multi_rm, multi_pr, metadata)


@dataclass
class DecayTrace:
    config: ExperimentConfig
    checkpoints: np.ndarray
    mean_error: dict  # (method, metric) -> array over checkpoints


def decay_trace(cfg: ExperimentConfig, threads=1) -> DecayTrace:
    """Replication-averaged squared estimation error and excess risk of the
    raw and averaged iterates at geometric checkpoints."""
    if not cfg.is_decay:
        raise ValueError("decay_trace needs a decay experiment")
    model = cfg.model()

    def one(indices):
        _, sinks = _run_group(cfg, indices, lambda b: [TraceSink(cfg.theta_star(), model.risk)])
        return sinks[0]

    sinks = _map_groups(one, _groups(cfg), threads)
    keys = {("proxRM", "estimation"): "rm_sq", ("proxPR", "estimation"): "pr_sq",
            ("proxRM", "optimization"): "rm_opt", ("proxPR", "optimization"): "pr_opt"}
    checkpoints = sinks[0].series("rm_sq")[0]
    mean = {}
    for key, name in keys.items():
        vals = np.concatenate([s.series(name)[1] for s in sinks], axis=1)
        mean[key] = vals.mean(axis=1)
    return DecayTrace(cfg, checkpoints, mean)


def final_iterates(cfg: ExperimentConfig, threads=1):
    """Final raw and averaged iterates of every replication, shape ``(B, p)``."""
    groups = _groups(cfg)
    states = _map_groups(lambda g: _run_group(cfg, g)[0], groups, threads)
    theta = np.concatenate([s.theta for s in states])
    bar = np.concatenate([averaged_iterate(s) for s in states])
    return theta, bar


def fit_loglog_slope(series, tail_fraction=0.5, min_points=10):
    """Least-squares slope of log(error) against log(n) over the last
    ``tail_fraction`` of the (n, error) pairs."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be a sequence of (n, error) pairs")
    k = max(1, int(math.ceil(tail_fraction * len(arr))))
    tail = arr[-k:]
    if len(tail) < min_points:
        raise ValueError(f"tail window has {len(tail)} points, need {min_points}")
    err = tail[:, 1]
    if np.any(~(err > 0)):
        warnings.warn("non-positive errors floored at 1e-300", DegenerateSeries, stacklevel=2)
        err = np.where(err > 0, err, 1e-300)
    slope, _ = np.polyfit(np.log(tail[:, 0]), np.log(err), 1)
    return float(slope)


# output files

TABLE_FIELDS = ["experiment", "sigma", "gamma", "p", "mu", "gamma1", "n", "reps", "method",
                "cover", "MSE", "lenCI", "covdiff", "covdiff_raw", "MSE_unnormalized"]


def fmt_sig(x):
    return f"{x:.6g}"


def fmt_sci(x):
    return f"{x:.5e}"


def table_rows(report: Report):
    cfg = report.config
    rows = []
    for method, s in (("proxRM", report.rm), ("proxPR", report.pr)):
        rows.append({
            "experiment": cfg.experiment,
            "sigma": cfg.sigma if cfg.experiment == "linreg" else "",
            "gamma": fmt_sig(cfg.gamma),
            "p": cfg.p,
            "mu": fmt_sig(cfg.mu) if cfg.experiment == "quantile" else "",
            "gamma1": fmt_sig(cfg.gamma1),
            "n": cfg.n_iters,
            "reps": cfg.reps,
            "method": method,
            "cover": fmt_sig(s.cover),
            "MSE": fmt_sci(s.mse),
            "lenCI": fmt_sig(s.len_ci),
            "covdiff": fmt_sci(s.covdiff),
            "covdiff_raw": fmt_sci(s.covdiff_raw),
            "MSE_unnormalized": fmt_sci(s.mse_unnormalized),
        })
    return rows


def table_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(table_rows(report))
    return buf.getvalue()


TRACE_FIELDS = ["experiment", "method", "metric", "gamma1", "gamma", "n", "mean_error"]


def trace_csv(trace: DecayTrace) -> str:
    cfg = trace.config
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for (method, metric), values in trace.mean_error.items():
        for n, v in zip(trace.checkpoints, values):
            w.writerow([cfg.experiment, method, metric, fmt_sig(cfg.gamma1), fmt_sig(cfg.gamma), int(n),
                        fmt_sci(v)])
    return buf.getvalue()


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_outputs(out_dir, stem, files: dict, cfg: ExperimentConfig, metadata=None):
    """Write text outputs plus a JSON manifest naming their content hashes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, text in files.items():
        data = text.encode()
        (out / name).write_bytes(data)
        hashes[name] = git_blob_hash(data)
    config = cfg.to_dict()
    manifest = {
        "package_version": __version__,
        "config": config,
        "config_hash": git_blob_hash(json.dumps(config, sort_keys=True).encode()),
        "seeds": {"base_seed": cfg.base_seed, "first": cfg.base_seed, "last": cfg.base_seed + cfg.reps - 1},
        "files": hashes,
        "metadata": metadata or {},
    }
    path = out / f"{stem}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return [out / name for name in files] + [path]
