"""Command-line front end.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Flags override
values from ``--config FILE`` (``key = value`` lines using flag names),
which override built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import harness
from .engine import LearningRate, averaged_iterate, run
from .errors import RegimeWarning
from .inference import (
    CovAccumulator,
    CovarianceSink,
    InferenceConfig,
    adjusted_hessian,
    proxpr_ci,
    proxpr_sandwich,
    proxrm_ci,
    proxrm_covariance,
)
from .model import LinearRegression, LinearSample, SmoothedQuantile


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(p, decay=False):
    p.add_argument("--gamma", type=float, help="learning-rate exponent")
    p.add_argument("--gamma1", type=float, help="initial step size")
    p.add_argument("--n", type=int, help="iterations per replication")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--burn-in", type=float, help="fraction of iterations discarded before averaging")
    p.add_argument("--seed", type=int, help="base seed; replication r uses seed + r")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for replication groups")
    p.add_argument("--paper-scale", action="store_true", default=None, help="use the original study's run sizes")
    p.add_argument("--config", help="key=value file of defaults")
    if not decay:
        p.add_argument("--delta", type=float, help="eigenvalue floor for the Hessian estimate")
        p.add_argument("--ci-alpha", type=float, help="1 - confidence level (default 0.05)")
        p.add_argument("--force", action="store_true", default=None, help="run outside the supported exponent range")


def build_parser():
    parser = _Parser(prog="proxsgd", description=__doc__.splitlines()[0],
                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run-linreg", help="linear-regression inference study", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--p", type=int, help="dimension")
    p.add_argument("--sigma", choices=["identity", "toeplitz", "equicorr"], help="design covariance")
    p.add_argument("--rho", type=float, help="correlation parameter of the design")

    p = sub.add_parser("run-quantile", help="smoothed quantile inference study", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--mu", type=float, help="smoothing half-width")
    p.add_argument("--alpha-q", type=float, help="quantile level")

    p = sub.add_parser("decay", help="error-decay traces on the toy losses", argument_default=argparse.SUPPRESS)
    _common(p, decay=True)
    p.add_argument("--loss", choices=["quadratic", "quartic"], help="toy loss")
    p.add_argument("--noise-sd", type=float, help="standard deviation of the linear noise term")

    p = sub.add_parser("infer-stream", help="single-pass inference over a sample file",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--model", choices=["linreg", "quantile"], help="loss")
    p.add_argument("--input", help="CSV of samples: y,x1..xp per row, or z per row")
    p.add_argument("--p", type=int, help="dimension when synthesizing")
    p.add_argument("--sigma", choices=["identity", "toeplitz", "equicorr"])
    p.add_argument("--rho", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--alpha-q", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--n", type=int, help="samples to synthesize when --input is absent")
    p.add_argument("--burn-in", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--ci-alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--theta0", type=float)
    p.add_argument("--out", help="write intervals to this directory")
    p.add_argument("--config")

    p = sub.add_parser("selftest", help="run the built-in property suites", argument_default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int)
    p.add_argument("--instances", type=int, help="random prox instances per loss kind")
    return parser


DEFAULTS = {
    "run-linreg": dict(p=5, sigma="identity", rho=None, gamma=0.6, gamma1=None, n=100_000, reps=100,
                       burn_in=0.1, delta=None, ci_alpha=0.05, seed=0, out="results", threads=None,
                       paper_scale=False, force=False),
    "run-quantile": dict(mu=0.01, alpha_q=0.99, gamma=0.6, gamma1=None, n=100_000, reps=100, burn_in=0.1,
                         delta=None, ci_alpha=0.05, seed=0, out="results", threads=None, paper_scale=False,
                         force=False),
    "decay": dict(loss="quadratic", noise_sd=4.0, gamma=0.5, gamma1=5.0, n=100_000, reps=20, burn_in=0.0,
                  seed=0, out="results", threads=None, paper_scale=False),
    "infer-stream": dict(model="linreg", input=None, p=5, sigma="identity", rho=None, mu=0.01, alpha_q=0.99,
                         gamma=0.6, gamma1=None, n=100_000, burn_in=0.1, delta=None, ci_alpha=0.05, seed=0,
                         theta0=0.0, out=None),
    "selftest": dict(seed=0, instances=1000),
}


def read_config(path):
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line without '=': {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes"):
            tokens.append(flag)
        elif value.lower() not in ("false", "no"):
            tokens += [flag, value]
    return tokens


def resolve(argv):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    opts = dict(DEFAULTS[command])
    if "config" in args:
        try:
            tokens = read_config(args.pop("config"))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        from_file = vars(parser.parse_args([command] + tokens))
        from_file.pop("command")
        from_file.pop("config", None)
        opts.update(from_file)
    opts.update(args)
    return command, opts


def _threads(opts):
    return opts["threads"] or os.cpu_count() or 1


def _check_regime(opts):
    g = opts["gamma"]
    if not 0.5 < g <= 1.0:
        msg = f"--gamma {g} is outside the inference regime (1/2, 1]"
        if not opts["force"]:
            raise UsageError(msg + "; pass --force to run anyway")
        print(f"warning: {msg}", file=sys.stderr)
    elif g == 1.0:
        print("warning: --gamma 1 is outside (1/2, 1); averaged-iterate intervals are reported without "
              "theoretical backing", file=sys.stderr)


def _print_table(report):
    print(f"{'method':<8} {'cover':>10} {'MSE':>13} {'lenCI':>10} {'covdiff':>13}")
    for name, s in (("proxRM", report.rm), ("proxPR", report.pr)):
        print(f"{name:<8} {harness.fmt_sig(s.cover):>10} {harness.fmt_sci(s.mse):>13} "
              f"{harness.fmt_sig(s.len_ci):>10} {harness.fmt_sci(s.covdiff):>13}")


def _inference_study(command, opts):
    _check_regime(opts)
    exp = "linreg" if command == "run-linreg" else "quantile"
    kw = dict(gamma=opts["gamma"], gamma1=opts["gamma1"], burn_in_fraction=opts["burn_in"],
              delta=opts["delta"], ci_alpha=opts["ci_alpha"], base_seed=opts["seed"])
    if exp == "linreg":
        kw.update(p=opts["p"], sigma=opts["sigma"], rho=opts["rho"])
    else:
        kw.update(mu=opts["mu"], alpha_q=opts["alpha_q"])
    if opts["paper_scale"]:
        cfg = harness.paper_scale(exp, **kw)
    else:
        cfg = harness.ExperimentConfig(exp, n_iters=opts["n"], reps=opts["reps"], **kw)
    report = harness.run_replications(cfg, threads=_threads(opts))
    stem = exp
    paths = harness.write_outputs(opts["out"], stem, {f"{stem}.csv": harness.table_csv(report)}, cfg,
                                  report.metadata)
    _print_table(report)
    for path in paths:
        print(f"wrote {path}")


def _decay(opts):
    exp = f"decay_{opts['loss']}"
    kw = dict(gamma=opts["gamma"], gamma1=opts["gamma1"], burn_in_fraction=opts["burn_in"],
              noise_sd=opts["noise_sd"], base_seed=opts["seed"])
    if opts["paper_scale"]:
        cfg = harness.paper_scale(exp, **kw)
    else:
        cfg = harness.ExperimentConfig(exp, n_iters=opts["n"], reps=opts["reps"], **kw)
    trace = harness.decay_trace(cfg, threads=_threads(opts))
    paths = harness.write_outputs(opts["out"], exp, {f"{exp}_trace.csv": harness.trace_csv(trace)}, cfg)
    print(f"{'method':<8} {'metric':<13} {'final n':>9} {'mean error':>13}")
    for (method, metric), values in trace.mean_error.items():
        print(f"{method:<8} {metric:<13} {int(trace.checkpoints[-1]):>9} {harness.fmt_sci(values[-1]):>13}")
    for path in paths:
        print(f"wrote {path}")


class ArrayStream:
    """Serves pre-recorded samples in order, ignoring the generator."""

    def __init__(self, samples, dim):
        self.samples = samples
        self.dim = dim
        self.pos = 0

    def __len__(self):
        return len(self.samples.y) if isinstance(self.samples, LinearSample) else len(self.samples)

    def draw(self, rng, size):
        sl = slice(self.pos, self.pos + size)
        self.pos += size
        if isinstance(self.samples, LinearSample):
            return LinearSample(self.samples.y[sl], self.samples.x[sl])
        return self.samples[sl]


def load_samples(path, kind):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        rows = rows[1:]  # header
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise ValueError(f"no samples in {path}")
    if kind == "linreg":
        if data.shape[1] < 2:
            raise ValueError("linreg rows need y followed by at least one covariate")
        return LinearSample(data[:, 0].copy(), data[:, 1:].copy())
    return data[:, 0].copy()


def _infer_stream(opts):
    kind = opts["model"]
    gamma = opts["gamma"]
    gamma1 = opts["gamma1"] or harness.default_gamma1(kind, gamma)
    if opts["input"]:
        samples = load_samples(opts["input"], kind)
        dim = samples.x.shape[1] if kind == "linreg" else 1
    else:
        cfg = harness.ExperimentConfig(kind, p=opts["p"], sigma=opts["sigma"], rho=opts["rho"], mu=opts["mu"],
                                       alpha_q=opts["alpha_q"], gamma=gamma, gamma1=gamma1, n_iters=opts["n"],
                                       reps=1)
        samples = cfg.stream().draw(np.random.default_rng(opts["seed"]), opts["n"])
        dim = cfg.p
    model = LinearRegression(dim) if kind == "linreg" else SmoothedQuantile(opts["alpha_q"], opts["mu"])
    stream = ArrayStream(samples, dim)
    n = len(stream)
    acc = CovAccumulator.empty(dim)
    state = run(model, stream, LearningRate(gamma1, gamma), n, np.full(dim, opts["theta0"]), opts["burn_in"],
                None, [CovarianceSink(model, acc)])
    icfg = InferenceConfig(gamma1, gamma, opts["delta"], opts["ci_alpha"])
    h_tilde = adjusted_hessian(acc, icfg.delta)
    sigma = proxrm_covariance(acc, icfg, h_tilde)
    ci_rm = proxrm_ci(state.theta, acc, icfg, state.n, sigma)
    bar = averaged_iterate(state)
    ci_pr = None
    if 0.5 < gamma < 1.0:
        ci_pr = proxpr_ci(bar, acc, icfg, state.avg_count, proxpr_sandwich(h_tilde, i_hat=acc.I_hat))
    else:
        print("warning: averaged-iterate intervals need --gamma in (1/2, 1); reporting the point estimate only",
              file=sys.stderr)
    rows = []
    print(f"{'coord':>5} {'theta_n':>12} {'rm_low':>12} {'rm_high':>12} {'theta_bar':>12} {'pr_low':>12} "
          f"{'pr_high':>12}")
    for j in range(dim):
        lo, hi = (ci_pr[j] if ci_pr is not None else (np.nan, np.nan))
        row = [j, state.theta[j], ci_rm[j, 0], ci_rm[j, 1], bar[j], lo, hi]
        rows.append(row)
        print(f"{j:>5} " + " ".join(f"{v:>12.6g}" for v in row[1:]))
    if opts["out"]:
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        path = out / "intervals.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coord", "theta_n", "rm_low", "rm_high", "theta_bar", "pr_low", "pr_high"])
            for row in rows:
                w.writerow([row[0]] + [f"{v:.6g}" for v in row[1:]])
        meta = {"n": state.n, "n_effective": state.avg_count, "gamma": gamma, "gamma1": gamma1,
                "delta": icfg.delta, "sigma_rm": sigma.tolist()}
        (out / "intervals_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")


def _selftest(opts):
    from .selftest import run_selftest

    results = run_selftest(seed=opts["seed"], n_prox=opts["instances"], n_shrink=opts["instances"])
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<24} {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def parse_and_dispatch(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, opts = resolve(argv)
        for key in ("n", "reps"):
            if key in opts and opts[key] is not None and opts[key] < 1:
                raise UsageError(f"--{key} must be positive")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            if command in ("run-linreg", "run-quantile"):
                _inference_study(command, opts)
            elif command == "decay":
                _decay(opts)
            elif command == "infer-stream":
                _infer_stream(opts)
            else:
                return _selftest(opts)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(parse_and_dispatch())
