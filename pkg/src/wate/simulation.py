"""Simulation design, true and pseudo-true estimands, and the Monte Carlo harness.

Covariates follow a two-component mixture: binary X3, X4 and a bivariate
normal (X1, X2) whose mean and covariance depend on them; X5..X7 are the
quadratic terms X1^2, X1 X2, X2^2.  Treatment is logistic in (1, X1..X7) and
the outcome is quadratic in (X1 + X2) with a constant or covariate-dependent
effect.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import expit

from ._random import child_seed, stream
from .data import Dataset, DesignSpec
from .errors import (
    ConfigError,
    DegenerateWeights,
    EstimationError,
)
from .estimands import Estimand, tilt
from .estimator import (
    augmented_value,
    fit_models,
    influence_vector,
    nuisances_for,
)
from .variance import (
    EXP1,
    SD,
    METHOD_TAGS,
    WB_METHODS,
    draw_multipliers,
    normal_quantile,
    post_weighting_bootstrap_draws,
    sandwich_variance,
    solve_theta,
    spread,
    standard_bootstrap_draws,
    wild_bootstrap_draws,
    min_successful,
)

COVARIATE_NAMES = ("X1", "X2", "X3", "X4", "X5", "X6", "X7")
N_SUPER = 1_000_000
TRUTH_SEED = 20240601

_SLOPES = (0.3, 0.4, 0.4, 0.4, -0.1, -0.1, 0.1)


@dataclass(frozen=True)
class SimModel:
    model_id: int
    beta: tuple
    n_default: int


MODELS = {
    1: SimModel(1, (-2.17,) + _SLOPES, 1000),
    2: SimModel(2, (-0.78,) + _SLOPES, 1000),
    3: SimModel(3, (0.98,) + _SLOPES, 1000),
    4: SimModel(4, (0.2, 1.0, -0.9, -0.9, 0.9, 0.15, 0.15, -0.2), 1000),
    5: SimModel(5, (0.98,) + _SLOPES, 50),
}


def get_model(model) -> SimModel:
    if isinstance(model, SimModel):
        return model
    try:
        return MODELS[int(model)]
    except (KeyError, ValueError):
        raise ConfigError(f"unknown simulation model {model!r}") from None


class EffectType(enum.Enum):
    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"

    @classmethod
    def parse(cls, text) -> "EffectType":
        if isinstance(text, cls):
            return text
        t = str(text).strip().lower()
        for member in cls:
            if member.value.startswith(t) and t:
                return member
        raise ConfigError(f"unknown effect type {text!r}")


CORRECT = DesignSpec(tuple(range(7)))
MISSPECIFIED = DesignSpec(tuple(range(4)))


@dataclass(frozen=True)
class ScenarioSpec:
    tag: str

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in ("A1", "A2", "A3", "A4"):
            raise ConfigError(f"unknown scenario {self.tag!r}")
        object.__setattr__(self, "tag", tag)

    @property
    def ps_spec(self) -> DesignSpec:
        return CORRECT if self.tag in ("A1", "A2") else MISSPECIFIED

    @property
    def or_spec(self) -> DesignSpec:
        return CORRECT if self.tag in ("A1", "A3") else MISSPECIFIED


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    dataset: Dataset
    true_e: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    delta: np.ndarray


def _covariates(rng: np.random.Generator, n: int) -> np.ndarray:
    x4 = (rng.random(n) < 0.5).astype(float)
    x3 = (rng.random(n) < 0.2 * x4 + 0.4).astype(float)
    u = rng.standard_normal((n, 2))
    mu1 = -x3 + x4 + 0.5 * x3 * x4
    mu2 = x3 - x4 + x3 * x4
    # Cholesky factors of [[1,.5],[.5,1]] and [[2,.25],[.25,2]]
    l11 = np.where(x3 == 1.0, 1.0, math.sqrt(2.0))
    l21 = np.where(x3 == 1.0, 0.5, 0.25 / math.sqrt(2.0))
    l22 = np.where(x3 == 1.0, math.sqrt(0.75), math.sqrt(2.0 - 0.25**2 / 2.0))
    x1 = mu1 + l11 * u[:, 0]
    x2 = mu2 + l21 * u[:, 0] + l22 * u[:, 1]
    return np.column_stack([x1, x2, x3, x4, x1 * x1, x1 * x2, x2 * x2])


def _propensity(model: SimModel, x: np.ndarray) -> np.ndarray:
    b = np.asarray(model.beta)
    return expit(b[0] + x @ b[1:])


def _effect(effect: EffectType, x: np.ndarray) -> np.ndarray:
    if effect is EffectType.HOMOGENEOUS:
        return np.full(x.shape[0], 4.0)
    s = x[:, 0] + x[:, 1]
    return 4.0 + 3.0 * s * s + x[:, 0] * x[:, 2]


def _baseline(x: np.ndarray) -> np.ndarray:
    s = x[:, 0] + x[:, 1]
    return 0.5 + x[:, 0] + 0.6 * x[:, 1] + 2.2 * x[:, 2] - 1.2 * x[:, 3] + s * s


def generate(model, n: int, effect, seed: int) -> SyntheticDataset:
    """One simulated sample of size ``n``; a pure function of its arguments."""
    model = get_model(model)
    effect = EffectType.parse(effect)
    if n < 2:
        raise ConfigError(f"sample size must be at least 2, got {n}")
    rng = stream(seed)
    x = _covariates(rng, n)
    e = _propensity(model, x)
    z = (rng.random(n) < e).astype(float)
    eps = rng.standard_normal((n, 2))
    base = _baseline(x)
    delta = _effect(effect, x)
    y0 = base + eps[:, 0]
    y1 = base + delta + eps[:, 1]
    y = np.where(z == 1.0, y1, y0)
    ds = Dataset(z, y, x, COVARIATE_NAMES)
    return SyntheticDataset(ds, e, y0, y1, delta)


@lru_cache(maxsize=4)
def _super_covariates(n_super: int, seed: int) -> np.ndarray:
    x = _covariates(stream(seed, 0), n_super)
    x.flags.writeable = False
    return x


def true_wates(
    model,
    effect,
    estimands: Sequence[Estimand],
    n_super: int = N_SUPER,
    seed: int = TRUTH_SEED,
) -> dict:
    """E[g(e) delta] / E[g(e)] for each estimand over one super-population draw."""
    model = get_model(model)
    effect = EffectType.parse(effect)
    if n_super < 100_000:
        raise ConfigError(f"super-population size must be at least 1e5, got {n_super}")
    x = _super_covariates(int(n_super), int(seed))
    e = _propensity(model, x)
    delta = _effect(effect, x)
    out = {}
    for est in estimands:
        g = np.asarray(tilt(est, e))
        out[est] = float(g @ delta / g.sum())
    return out


def true_wate(model, effect, est: Estimand, n_super: int = N_SUPER, seed: int = TRUTH_SEED) -> float:
    return true_wates(model, effect, [est], n_super, seed)[est]


def pseudo_true_wates(
    model,
    effect,
    estimands: Sequence[Estimand],
    scenario,
    n_super: int = N_SUPER,
    seed: int = TRUTH_SEED,
) -> dict:
    """Limit of the augmented estimator under the scenario's working models.

    The working models are fitted on one super-population sample and the
    augmented estimator (outcome contrast plus the weighted residual terms)
    is evaluated there.  The residual terms vanish when the outcome models
    are correct, leaving E[g~(m~1 - m~0)] / E[g~].
    """
    scenario = scenario if isinstance(scenario, ScenarioSpec) else ScenarioSpec(scenario)
    if n_super < 100_000:
        raise ConfigError(f"super-population size must be at least 1e5, got {n_super}")
    sample = generate(model, int(n_super), effect, child_seed(seed, 1))
    ds = sample.dataset
    fits = fit_models(ds, scenario.ps_spec, scenario.or_spec)
    out = {}
    for est in estimands:
        nus = nuisances_for(fits, est)
        out[est] = augmented_value(ds.z, ds.y, nus.m0, nus.m1, nus.g, nus.w0, nus.w1)
    return out


def pseudo_true_wate(model, effect, est, scenario, n_super: int = N_SUPER, seed: int = TRUTH_SEED) -> float:
    return pseudo_true_wates(model, effect, [est], scenario, n_super, seed)[est]


def proportion_treated(model, n: int = N_SUPER, seed: int = TRUTH_SEED) -> float:
    """Share of treated units in a simulated sample."""
    return float(generate(model, n, EffectType.HOMOGENEOUS, seed).dataset.z.mean())


# ---------------------------------------------------------------------------
# Monte Carlo harness

# keys for the per-replicate streams
_KEY_DATA = 0
_KEY_BOOT1 = 1
_KEY_BOOT2 = 2
_KEY_EXP = 3
_KEY_RAD = 4


@dataclass(frozen=True)
class CellConfig:
    model: int
    n: int
    effect: EffectType
    scenario: ScenarioSpec
    estimands: tuple
    methods: tuple
    R: int
    scale: str
    seed: int


@dataclass(frozen=True, eq=False)
class ReplicateTable:
    """Per-replicate outputs of one cell.

    ``tau`` is M x K; ``variance[method]`` is M x K with NaN where the method
    (or the point estimate) failed.
    """

    config: CellConfig
    tau: np.ndarray
    variance: dict


def _one_replicate(cfg: CellConfig, m: int):
    k = len(cfg.estimands)
    tau = np.full(k, np.nan)
    var = {meth: np.full(k, np.nan) for meth in cfg.methods}
    ds = generate(cfg.model, cfg.n, cfg.effect, child_seed(cfg.seed, m, _KEY_DATA)).dataset
    ps_spec, or_spec = cfg.scenario.ps_spec, cfg.scenario.or_spec
    try:
        fits = fit_models(ds, ps_spec, or_spec)
    except EstimationError:
        return tau, var
    nus = [nuisances_for(fits, est) for est in cfg.estimands]
    for j, nu in enumerate(nus):
        try:
            tau[j] = augmented_value(ds.z, ds.y, nu.m0, nu.m1, nu.g, nu.w0, nu.w1)
        except DegenerateWeights:
            pass
    ok = np.isfinite(tau)

    def from_draws(meth, draws):
        for j in range(k):
            if not ok[j]:
                continue
            col = draws[:, j]
            good = col[np.isfinite(col)]
            if good.shape[0] >= min_successful(cfg.R):
                s = spread(good, cfg.scale)
                var[meth][j] = s * s

    if "boot1" in cfg.methods:
        seed = child_seed(cfg.seed, m, _KEY_BOOT1)
        draws = standard_bootstrap_draws(
            ds, ps_spec, or_spec, cfg.estimands, cfg.R, seed, fits.ps.beta
        )
        from_draws("boot1", draws)
    if "boot2" in cfg.methods:
        seed = child_seed(cfg.seed, m, _KEY_BOOT2)
        draws = post_weighting_bootstrap_draws(ds, fits.e, or_spec, cfg.estimands, cfg.R, seed)
        from_draws("boot2", draws)

    wb = [meth for meth in cfg.methods if meth in WB_METHODS]
    if wb:
        xi = {}
        phis = {}
        for meth in wb:
            pert, variant = WB_METHODS[meth]
            if pert not in xi:
                key = _KEY_EXP if pert == EXP1 else _KEY_RAD
                xi[pert] = draw_multipliers(ds.n, cfg.R, child_seed(cfg.seed, m, key), pert)
            if variant not in phis:
                phi = np.zeros((ds.n, k))
                for j, nu in enumerate(nus):
                    if ok[j]:
                        phi[:, j] = influence_vector(ds, nu, nu.estimand, tau[j], variant).phi
                phis[variant] = phi
            delta = wild_bootstrap_draws(phis[variant], xi[pert])
            for j in range(k):
                if ok[j]:
                    s = spread(delta[:, j], cfg.scale)
                    var[meth][j] = s * s / ds.n

    if "sand" in cfg.methods:
        for j, est in enumerate(cfg.estimands):
            if not ok[j]:
                continue
            try:
                theta = solve_theta(ds, ps_spec, or_spec, est, fits)
                var["sand"][j] = sandwich_variance(ds, theta, ps_spec, or_spec, est).variance
            except EstimationError:
                pass
    return tau, var


def _replicate_chunk(args):
    cfg, ms = args
    return [_one_replicate(cfg, m) for m in ms]


def run_replicates(cfg: CellConfig, M: int, workers: int = 1) -> ReplicateTable:
    """Run replicates 0..M-1 of a cell; the result does not depend on ``workers``."""
    if M < 2:
        raise ConfigError(f"need at least 2 Monte Carlo replicates, got {M}")
    if workers <= 1:
        results = [_one_replicate(cfg, m) for m in range(M)]
    else:
        chunks = [(cfg, list(range(i, M, workers))) for i in range(workers)]
        results = [None] * M
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (_, ms), part in zip(chunks, pool.map(_replicate_chunk, chunks)):
                for m, res in zip(ms, part):
                    results[m] = res
    tau = np.array([r[0] for r in results])
    var = {meth: np.array([r[1][meth] for r in results]) for meth in cfg.methods}
    return ReplicateTable(cfg, tau, var)


@dataclass(frozen=True)
class MetricsRow:
    model: int
    n: int
    effect: str
    scenario: str
    estimand: str
    method: str
    arbias_pct: float
    rmse: float
    esd: float
    median_se: float
    median_re: float
    cp: float
    failures: int
    M: int
    R: int
    seed: int

    @classmethod
    def header(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


def summarize_cell(table: ReplicateTable, truths: dict, alpha: float = 0.05) -> list:
    """Aggregate per-replicate output into one MetricsRow per (estimand, method)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    cfg = table.config
    zq = normal_quantile(1.0 - alpha / 2.0)
    M = table.tau.shape[0]
    rows = []
    for j, est in enumerate(cfg.estimands):
        truth = truths[est]
        t = table.tau[:, j]
        ok = np.isfinite(t)
        tk = t[ok]
        nan = float("nan")
        if tk.size:
            arbias = 100.0 * abs(float(np.mean((tk - truth) / truth)))
            rmse = math.sqrt(float(np.mean((tk - truth) ** 2)))
        else:
            arbias = rmse = nan
        esd = float(np.std(tk, ddof=1)) if tk.size > 1 else nan
        for meth in cfg.methods:
            v = table.variance[meth][:, j]
            good = ok & np.isfinite(v)
            vg = v[good]
            if vg.size:
                se = np.sqrt(vg)
                med_se = float(np.median(se))
                with np.errstate(divide="ignore"):
                    med_re = float(np.median(esd * esd / vg))
                cp = float(np.mean(np.abs(t[good] - truth) <= zq * se))
            else:
                med_se = med_re = cp = nan
            rows.append(
                MetricsRow(
                    cfg.model, cfg.n, cfg.effect.value, cfg.scenario.tag, est.name, meth,
                    arbias, rmse, esd, med_se, med_re, cp, int(M - good.sum()),
                    M, cfg.R, cfg.seed,
                )
            )
    return rows


def make_cell(
    model,
    n: int | None,
    effect,
    scenario,
    estimands: Sequence[Estimand],
    methods: Sequence[str],
    R: int,
    seed: int,
    scale: str = SD,
) -> CellConfig:
    model = get_model(model)
    if not estimands:
        raise ConfigError("no estimands requested")
    if not methods:
        raise ConfigError("no variance methods requested")
    bad = [m for m in methods if m not in METHOD_TAGS]
    if bad:
        raise ConfigError(f"unknown variance methods {bad}")
    resampling = any(m != "sand" for m in methods)
    if resampling and R < 2:
        raise ConfigError(f"need at least 2 replicates, got {R}")
    scale = scale.upper()
    if scale not in (SD, "IQR"):
        raise ConfigError(f"unknown scale estimator {scale!r}")
    return CellConfig(
        model.model_id,
        int(n if n is not None else model.n_default),
        EffectType.parse(effect),
        scenario if isinstance(scenario, ScenarioSpec) else ScenarioSpec(scenario),
        tuple(estimands),
        tuple(methods),
        int(R),
        scale,
        int(seed),
    )


def run_monte_carlo(
    model,
    n: int | None,
    effect,
    scenario,
    estimands: Sequence[Estimand],
    methods: Sequence[str],
    M: int,
    R: int,
    alpha: float = 0.05,
    seed: int = 0,
    scale: str = SD,
    workers: int = 1,
    truths: dict | None = None,
    return_table: bool = False,
):
    """Monte Carlo evaluation of one simulation cell.

    Metrics are computed against the true WATE unless ``truths`` is given.
    With ``return_table`` the per-replicate :class:`ReplicateTable` is
    returned alongside the rows.
    """
    cfg = make_cell(model, n, effect, scenario, estimands, methods, R, seed, scale)
    if truths is None:
        truths = true_wates(cfg.model, cfg.effect, cfg.estimands)
    table = run_replicates(cfg, M, workers)
    rows = summarize_cell(table, truths, alpha)
    return (rows, table) if return_table else rows

