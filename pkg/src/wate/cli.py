"""Command-line front end: ``wate estimate``, ``wate simulate`` and ``wate truth``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import __version__
from ._random import child_seed
from .data import DesignSpec, load_csv
from .errors import ConfigError, EstimationError, WateError
from .estimands import PAPER_ESTIMANDS, Estimand
from .estimator import (
    IF_I,
    IF_II,
    augmented_wate,
    ess_by_arm,
    fit_models,
    influence_vector,
    nuisances_for,
    weighted_asmd,
)
from .simulation import (
    MODELS,
    N_SUPER,
    TRUTH_SEED,
    EffectType,
    MetricsRow,
    ScenarioSpec,
    make_cell,
    pseudo_true_wates,
    run_replicates,
    summarize_cell,
    true_wates,
)
from .variance import (
    EXP1,
    METHOD_TAGS,
    RADEMACHER,
    WB_METHODS,
    draw_multipliers,
    p_value,
    post_weighting_bootstrap_draws,
    sandwich_variance,
    solve_theta,
    standard_bootstrap_draws,
    summarize_draws,
    wald_ci,
    wild_bootstrap,
)

_PERTURBATIONS = {"exp1": EXP1, "rademacher": RADEMACHER}
_VARIANTS = {"if1": IF_I, "if2": IF_II}
_METHOD_NAMES = {
    "boot1": "BOOT_I",
    "boot2": "BOOT_II",
    "sand": "SAND",
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    estimands: tuple
    methods: tuple
    R: int
    M: int
    alpha: float
    seed: int
    scale: str
    perturbation: str
    if_variant: str
    ps_covariates: tuple | None
    or_covariates: tuple | None
    input: str | None
    treatment_col: str
    outcome_col: str
    models: tuple
    effect: str
    scenarios: tuple
    n: int | None
    n_super: int
    format: str
    out: str | None
    threads: int

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["estimands"] = [e.name for e in self.estimands]
        d.pop("threads")  # results never depend on it
        d.pop("out")
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


def _split(text: str | None) -> list:
    if text is None:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _resolve_methods(names, perturbation, if_variant) -> tuple:
    out = []
    for m in names:
        m = m.lower()
        if m == "wb":
            m = "wb" + ("exp" if perturbation == "exp1" else "rad") + if_variant[-1]
        if m not in METHOD_TAGS:
            raise ConfigError(f"unknown variance method {m!r}")
        if m not in out:
            out.append(m)
    return tuple(out)


def build_config(args: argparse.Namespace) -> RunConfig:
    """Validate arguments into a RunConfig; raises ConfigError before any work."""
    perturbation = args.perturbation.lower()
    if perturbation not in _PERTURBATIONS:
        raise ConfigError(f"unknown perturbation {args.perturbation!r}")
    if_variant = args.if_variant.lower()
    if if_variant not in _VARIANTS:
        raise ConfigError(f"unknown influence-function variant {args.if_variant!r}")
    scale = args.scale.lower()
    if scale not in ("sd", "iqr"):
        raise ConfigError(f"unknown scale estimator {args.scale!r}")
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {args.alpha}")
    estimands = tuple(Estimand.parse(t) for t in _split(args.estimands))
    if not estimands:
        raise ConfigError("no estimands requested")
    methods = ()
    if args.subcommand in ("estimate", "simulate"):
        methods = _resolve_methods(_split(args.methods), perturbation, if_variant)
        if not methods:
            raise ConfigError("no variance methods requested")
        if any(m != "sand" for m in methods) and args.replicates < 2:
            raise ConfigError(f"--replicates must be at least 2, got {args.replicates}")
    if args.subcommand == "simulate" and args.mc_reps < 2:
        raise ConfigError(f"--mc-reps must be at least 2, got {args.mc_reps}")
    if args.subcommand == "estimate" and not args.input:
        raise ConfigError("estimate needs --input")
    if args.threads < 1:
        raise ConfigError("--threads must be positive")
    models = tuple(int(m) for m in _split(args.model))
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"unknown simulation model {m}")
    if args.subcommand == "simulate" and len(models) != 1:
        raise ConfigError("simulate runs one model at a time")
    effect = EffectType.parse(args.effect).value
    scenarios = tuple(ScenarioSpec(s).tag for s in _split(args.scenario))
    if args.subcommand == "simulate" and len(scenarios) != 1:
        raise ConfigError("simulate runs one scenario at a time")
    if args.n is not None and args.n < 2:
        raise ConfigError("--n must be at least 2")
    if args.n_super < 100_000:
        raise ConfigError("--n-super must be at least 100000")
    fmt = args.format.lower()
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {args.format!r}")
    ps = tuple(_split(args.ps_covariates)) or None
    orc = tuple(_split(args.or_covariates)) or None
    return RunConfig(
        args.subcommand, estimands, methods, args.replicates, args.mc_reps, args.alpha,
        args.seed, scale, perturbation, if_variant, ps, orc, args.input,
        args.treatment_col, args.outcome_col, models, effect, scenarios, args.n,
        args.n_super, fmt, args.out, args.threads,
    )


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, (np.floating,)):
        return _clean(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# estimate


def _ps_summary(e, z) -> dict:
    out = {}
    for arm, mask in (("treated", z == 1), ("control", z == 0)):
        v = e[mask]
        q = np.percentile(v, [0, 25, 50, 75, 100])
        out[arm] = {
            "n": int(mask.sum()),
            "mean": float(v.mean()),
            "min": float(q[0]),
            "q25": float(q[1]),
            "median": float(q[2]),
            "q75": float(q[3]),
            "max": float(q[4]),
        }
    return out


def _record(tau, var, used, failures, alpha) -> dict:
    se = math.sqrt(var)
    ci = wald_ci(tau, se, alpha)
    return {
        "estimate": tau,
        "se": se,
        "variance": var,
        "p_value": p_value(tau, se),
        "ci_lower": ci.lower,
        "ci_upper": ci.upper,
        "replicates_used": used,
        "failures": failures,
    }


def _error_record(tau, exc) -> dict:
    return {"estimate": tau, "error": type(exc).__name__, "message": str(exc)}


def cmd_estimate(cfg: RunConfig) -> dict:
    ds = load_csv(cfg.input, cfg.treatment_col, cfg.outcome_col)
    ps_spec = DesignSpec.from_names(ds, cfg.ps_covariates) if cfg.ps_covariates else DesignSpec.all_columns(ds)
    or_spec = DesignSpec.from_names(ds, cfg.or_covariates) if cfg.or_covariates else DesignSpec.all_columns(ds)
    fits = fit_models(ds, ps_spec, or_spec)
    e = fits.e
    scale = cfg.scale.upper()

    diagnostics = {
        "n": ds.n,
        "n_treated": ds.n_treated,
        "ps_converged": bool(fits.ps.converged),
        "ps_summary": _ps_summary(e, ds.z),
        "ess": {},
        "asmd": {"unweighted": dict(zip(ds.covariate_names, weighted_asmd(ds, np.ones(ds.n), np.ones(ds.n)).tolist()))},
    }
    nus = {est: nuisances_for(fits, est) for est in cfg.estimands}
    taus = {}
    for est, nu in nus.items():
        diagnostics["ess"][est.name] = ess_by_arm(ds.z, nu.w0, nu.w1)
        diagnostics["asmd"][est.name] = dict(
            zip(ds.covariate_names, weighted_asmd(ds, nu.w1, nu.w0).tolist())
        )
        taus[est] = augmented_wate(ds, nu).tau_hat

    ests = list(cfg.estimands)
    results = {est.name: {} for est in ests}
    R = cfg.R
    draws = {}
    if "boot1" in cfg.methods:
        draws["boot1"] = standard_bootstrap_draws(
            ds, ps_spec, or_spec, ests, R, child_seed(cfg.seed, 1), fits.ps.beta
        )
    if "boot2" in cfg.methods:
        draws["boot2"] = post_weighting_bootstrap_draws(
            ds, e, or_spec, ests, R, child_seed(cfg.seed, 2)
        )
    xi = {}
    for meth in cfg.methods:
        if meth in WB_METHODS:
            pert = WB_METHODS[meth][0]
            if pert not in xi:
                key = 3 if pert == EXP1 else 4
                xi[pert] = draw_multipliers(ds.n, R, child_seed(cfg.seed, key), pert)

    for j, est in enumerate(ests):
        tau = taus[est]
        for meth in cfg.methods:
            try:
                if meth in draws:
                    ve = summarize_draws(draws[meth][:, j], _METHOD_NAMES[meth], scale, tau)
                elif meth in WB_METHODS:
                    pert, variant = WB_METHODS[meth]
                    phi = influence_vector(ds, nus[est], est, tau, variant)
                    ve = wild_bootstrap(phi, tau, R, 0, pert, scale, xi=xi[pert])
                else:
                    theta = solve_theta(ds, ps_spec, or_spec, est, fits)
                    ve = sandwich_variance(ds, theta, ps_spec, or_spec, est)
                rec = _record(tau, ve.variance, ve.replicates_used, ve.failures, cfg.alpha)
            except EstimationError as exc:
                rec = _error_record(tau, exc)
            results[est.name][meth] = rec
    return {
        "version": __version__,
        "config": cfg.as_dict(),
        "diagnostics": diagnostics,
        "results": results,
    }


_ESTIMATE_COLUMNS = (
    "record", "estimand", "method", "covariate", "estimate", "se", "p_value",
    "ci_lower", "ci_upper", "replicates_used", "failures", "value", "error",
)


def _estimate_csv(report: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# wate {report['version']}\n")
    buf.write("# config " + json.dumps(_clean(report["config"]), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_ESTIMATE_COLUMNS)

    def row(**kw):
        w.writerow([_fmt(kw.get(c)) for c in _ESTIMATE_COLUMNS])

    for est, methods in report["results"].items():
        for meth, rec in methods.items():
            row(record="result", estimand=est, method=meth, **{k: v for k, v in rec.items() if k != "message"})
    diag = report["diagnostics"]
    for est, v in diag["ess"].items():
        row(record="ess", estimand=est, value=v)
    for est, per in diag["asmd"].items():
        for cov, v in per.items():
            row(record="asmd", estimand=est, covariate=cov, value=v)
    for arm, stats in diag["ps_summary"].items():
        for k, v in stats.items():
            row(record="ps_summary", method=arm, covariate=k, value=v)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# simulate and truth


def cmd_simulate(cfg: RunConfig) -> list:
    cell = make_cell(
        cfg.models[0], cfg.n, cfg.effect, cfg.scenarios[0], cfg.estimands, cfg.methods,
        cfg.R, cfg.seed, cfg.scale,
    )
    truths = true_wates(cell.model, cell.effect, cell.estimands, cfg.n_super)
    table = run_replicates(cell, cfg.M, cfg.threads)
    return summarize_cell(table, truths, cfg.alpha)


def _simulate_output(cfg: RunConfig, rows: list) -> str:
    if cfg.format == "json":
        payload = {
            "version": __version__,
            "config": cfg.as_dict(),
            "rows": [dict(zip(MetricsRow.header(), r.as_tuple())) for r in rows],
        }
        return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MetricsRow.header())
    for r in rows:
        w.writerow([_fmt(v) for v in r.as_tuple()])
    return buf.getvalue()


_TRUTH_COLUMNS = ("model", "effect", "estimand", "kind", "scenario", "value", "n_super", "seed")


def cmd_truth(cfg: RunConfig) -> list:
    out = []
    for model in cfg.models:
        t = true_wates(model, cfg.effect, cfg.estimands, cfg.n_super, cfg.seed)
        for est in cfg.estimands:
            out.append((model, cfg.effect, est.name, "true", "", t[est], cfg.n_super, cfg.seed))
        for sc in cfg.scenarios:
            p = pseudo_true_wates(model, cfg.effect, cfg.estimands, sc, cfg.n_super, cfg.seed)
            for est in cfg.estimands:
                out.append((model, cfg.effect, est.name, "pseudo", sc, p[est], cfg.n_super, cfg.seed))
    return out


def _truth_output(cfg: RunConfig, rows: list) -> str:
    if cfg.format == "json":
        payload = {
            "version": __version__,
            "config": cfg.as_dict(),
            "rows": [dict(zip(_TRUTH_COLUMNS, r)) for r in rows],
        }
        return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_TRUTH_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".wate-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig) -> str:
    if cfg.subcommand == "estimate":
        report = cmd_estimate(cfg)
        if cfg.format == "json":
            return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
        return _estimate_csv(report)
    if cfg.subcommand == "simulate":
        return _simulate_output(cfg, cmd_simulate(cfg))
    return _truth_output(cfg, cmd_truth(cfg))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wate", description=__doc__)
    p.add_argument("--version", action="version", version=f"wate {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    default_est = ",".join(e.name for e in PAPER_ESTIMANDS)

    def common(sp):
        sp.add_argument("--estimands", default=default_est,
                        help="comma list of ate, att, atc, ato, atm, aten, trim:<alpha>")
        sp.add_argument("--alpha", type=float, default=0.05, help="1 - confidence level")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", default="csv", help="csv or json")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")

    def variance(sp):
        sp.add_argument("--methods", default=",".join(METHOD_TAGS),
                        help="comma list of boot1, boot2, wbexp1, wbrad1, wbexp2, wbrad2, sand, wb")
        sp.add_argument("--replicates", type=int, default=200, help="bootstrap replicates R")
        sp.add_argument("--scale", default="sd", help="sd or iqr")
        sp.add_argument("--perturbation", default="exp1", help="multiplier law for 'wb': exp1 or rademacher")
        sp.add_argument("--if-variant", default="if2", help="influence function for 'wb': if1 or if2")

    est = sub.add_parser("estimate", help="analyse a CSV dataset")
    common(est)
    variance(est)
    est.add_argument("--input")
    est.add_argument("--treatment-col", default="treatment")
    est.add_argument("--outcome-col", default="outcome")
    est.add_argument("--ps-covariates", help="comma list (default: all other columns)")
    est.add_argument("--or-covariates", help="comma list (default: all other columns)")

    sim = sub.add_parser("simulate", help="Monte Carlo evaluation of one simulation cell")
    common(sim)
    variance(sim)
    sim.add_argument("--model", default="2")
    sim.add_argument("--effect", default="heterogeneous")
    sim.add_argument("--scenario", default="A1")
    sim.add_argument("--n", type=int, help="sample size (default: the model's)")
    sim.add_argument("--mc-reps", type=int, default=500, help="Monte Carlo replicates M")
    sim.add_argument("--n-super", type=int, default=N_SUPER, help="super-population size for the truth")

    tr = sub.add_parser("truth", help="true (and pseudo-true) WATE values")
    common(tr)
    tr.add_argument("--model", default="1,2,3,4")
    tr.add_argument("--effect", default="heterogeneous")
    tr.add_argument("--scenario", default="", help="comma list of A1..A4 for pseudo-truths")
    tr.add_argument("--n-super", type=int, default=N_SUPER)
    tr.set_defaults(seed=TRUTH_SEED)
    return p


_FILLERS = {
    "methods": "", "replicates": 0, "mc_reps": 0, "scale": "sd", "perturbation": "exp1",
    "if_variant": "if2", "ps_covariates": None, "or_covariates": None, "input": None,
    "treatment_col": "treatment", "outcome_col": "outcome", "model": "", "effect": "heterogeneous",
    "scenario": "", "n": None, "n_super": N_SUPER,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for k, v in _FILLERS.items():
        if not hasattr(args, k):
            setattr(args, k, v)
    try:
        cfg = build_config(args)
        text = run(cfg)
    except WateError as exc:
        print(f"wate: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if cfg.out:
        write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
