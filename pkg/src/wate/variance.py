"""Variance estimators for the augmented WATE estimator.

Four families are provided:

* ``SAND``: M-estimation sandwich over the stacked parameter
  (beta, alpha1, alpha0, tau1, tau0, mu1, mu0);
* ``BOOT_I``: resample rows, refit every model;
* ``BOOT_II``: resample rows together with the full-sample propensity scores,
  refit only the outcome models;
* ``WB``: multiplier (wild) bootstrap of an estimated influence vector.

Every :class:`VarianceEstimate` reports the variance of the point estimate
itself (not of its root-N scaled version).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit, ndtr, ndtri

from ._random import stream
from .data import Dataset, DesignSpec, design_matrix
from .errors import (
    ConfigError,
    DegenerateWeights,
    EstimationError,
    SandwichUnobtainable,
    TooFewSuccessfulReplicates,
)
from .estimands import Estimand, tilt, tilt_gradient, weights
from .estimator import (
    IF_I,
    FittedNuisances,
    InfluenceVector,
    ModelFits,
    augmented_value,
    augmented_wate,
    fit_arm_models,
    fit_models,
    nuisances_for,
)
from .glm import PROB_CLAMP, RANK_TOL, fit_logistic

SAND = "SAND"
BOOT_I = "BOOT_I"
BOOT_II = "BOOT_II"
WB = "WB"

EXP1 = "EXP1"
RADEMACHER = "RADEMACHER"
SD = "SD"
IQR = "IQR"

# z_{0.75} - z_{0.25} as used to turn an IQR into a standard deviation
IQR_TO_SD = 1.349

# Method labels used by the simulation harness and the command line.
METHOD_TAGS = ("boot1", "boot2", "wbexp1", "wbrad1", "wbexp2", "wbrad2", "sand")
WB_METHODS = {
    "wbexp1": (EXP1, IF_I),
    "wbrad1": (RADEMACHER, IF_I),
    "wbexp2": (EXP1, "IF_II"),
    "wbrad2": (RADEMACHER, "IF_II"),
}


@dataclass(frozen=True)
class WBConfig:
    if_variant: str
    perturbation: str
    scale: str


@dataclass(frozen=True)
class VarianceEstimate:
    method: str
    variance: float
    replicates_requested: int = 0
    replicates_used: int = 0
    failures: int = 0
    wb_config: WBConfig | None = None
    point_estimate: float | None = None

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True, eq=False)
class ThetaAug:
    beta: np.ndarray
    alpha1: np.ndarray
    alpha0: np.ndarray
    tau1g_m: float
    tau0g_m: float
    mu1g_m: float
    mu0g_m: float

    @property
    def tau(self) -> float:
        return self.tau1g_m - self.tau0g_m + self.mu1g_m - self.mu0g_m

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.beta,
                self.alpha1,
                self.alpha0,
                [self.tau1g_m, self.tau0g_m, self.mu1g_m, self.mu0g_m],
            ]
        )

    @classmethod
    def from_vector(cls, theta, n_ps: int, n_or: int) -> "ThetaAug":
        theta = np.asarray(theta, dtype=float)
        b = theta[:n_ps]
        a1 = theta[n_ps : n_ps + n_or]
        a0 = theta[n_ps + n_or : n_ps + 2 * n_or]
        t1, t0, u1, u0 = theta[n_ps + 2 * n_or :]
        return cls(b, a1, a0, float(t1), float(t0), float(u1), float(u0))


@dataclass(frozen=True)
class WaldInterval:
    lower: float
    upper: float
    level: float


def solve_theta(
    ds: Dataset,
    ps_spec: DesignSpec,
    or_spec: DesignSpec,
    est: Estimand,
    fits: ModelFits | None = None,
) -> ThetaAug:
    """Root of the stacked estimating equation."""
    if fits is None:
        fits = fit_models(ds, ps_spec, or_spec)
    nus = nuisances_for(fits, est)
    z, y = ds.z, ds.y
    sg = nus.g.sum()
    a1 = z * nus.w1
    a0 = (1.0 - z) * nus.w0
    if sg == 0.0 or a1.sum() == 0.0 or a0.sum() == 0.0:
        raise DegenerateWeights("a normalising weight sum is zero")
    return ThetaAug(
        fits.ps.beta,
        fits.or1.alpha,
        fits.or0.alpha,
        float(nus.g @ nus.m1 / sg),
        float(nus.g @ nus.m0 / sg),
        float(a1 @ (y - nus.m1) / a1.sum()),
        float(a0 @ (y - nus.m0) / a0.sum()),
    )


def _pieces(ds, theta, ps_spec, or_spec, est):
    v = design_matrix(ds, ps_spec)
    w = design_matrix(ds, or_spec)
    e = np.clip(expit(v @ theta.beta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    g = np.asarray(tilt(est, e))
    w0, w1 = weights(est, e)
    m1 = w @ theta.alpha1
    m0 = w @ theta.alpha0
    return v, w, e, g, w0, w1, m1, m0


def estimating_function(
    ds: Dataset, theta: ThetaAug, ps_spec: DesignSpec, or_spec: DesignSpec, est: Estimand
) -> np.ndarray:
    """N x d matrix whose i-th row is psi(Z_i, X_i, Y_i) at ``theta``."""
    v, w, e, g, w0, w1, m1, m0 = _pieces(ds, theta, ps_spec, or_spec, est)
    z, y = ds.z, ds.y
    return np.column_stack(
        [
            (z - e)[:, None] * v,
            (z * (y - m1))[:, None] * w,
            ((1.0 - z) * (y - m0))[:, None] * w,
            g * (m1 - theta.tau1g_m),
            g * (m0 - theta.tau0g_m),
            z * w1 * (y - m1 - theta.mu1g_m),
            (1.0 - z) * w0 * (y - m0 - theta.mu0g_m),
        ]
    )


def _bread_blocks(ds, theta, ps_spec, or_spec, est):
    v, w, e, g, w0, w1, m1, m0 = _pieces(ds, theta, ps_spec, or_spec, est)
    z, y = ds.z, ds.y
    n = ds.n
    dg = tilt_gradient(est, e, v)
    r1 = y - m1 - theta.mu1g_m
    r0 = y - m0 - theta.mu0g_m
    b = {}
    b["11"] = (v * (e * (1.0 - e))[:, None]).T @ v / n
    b["22"] = (w * z[:, None]).T @ w / n
    b["33"] = (w * (1.0 - z)[:, None]).T @ w / n
    b["41"] = -dg.T @ (m1 - theta.tau1g_m) / n
    b["42"] = -(g @ w) / n
    b["53"] = b["42"]
    b["44"] = g.sum() / n
    b["55"] = b["44"]
    b["51"] = -dg.T @ (m0 - theta.tau0g_m) / n
    b["61"] = -((dg - ((1.0 - e) * g)[:, None] * v) / e[:, None]).T @ (z * r1) / n
    b["62"] = (z * w1) @ w / n
    b["66"] = (z * w1).sum() / n
    b["71"] = -((dg + (e * g)[:, None] * v) / (1.0 - e)[:, None]).T @ ((1.0 - z) * r0) / n
    b["73"] = ((1.0 - z) * w0) @ w / n
    b["77"] = ((1.0 - z) * w0).sum() / n
    return b


def bread_matrix(
    ds: Dataset, theta: ThetaAug, ps_spec: DesignSpec, or_spec: DesignSpec, est: Estimand
) -> np.ndarray:
    """Dense A_N = -(1/N) sum d psi / d theta' assembled from its nonzero blocks."""
    b = _bread_blocks(ds, theta, ps_spec, or_spec, est)
    kv = ps_spec.n_params
    kw = or_spec.n_params
    s_b = slice(0, kv)
    s_a1 = slice(kv, kv + kw)
    s_a0 = slice(kv + kw, kv + 2 * kw)
    t1, t0, u1, u0 = (kv + 2 * kw + i for i in range(4))
    a = np.zeros((kv + 2 * kw + 4,) * 2)
    a[s_b, s_b] = b["11"]
    a[s_a1, s_a1] = b["22"]
    a[s_a0, s_a0] = b["33"]
    a[t1, s_b] = b["41"]
    a[t1, s_a1] = b["42"]
    a[t1, t1] = b["44"]
    a[t0, s_b] = b["51"]
    a[t0, s_a0] = b["53"]
    a[t0, t0] = b["55"]
    a[u1, s_b] = b["61"]
    a[u1, s_a1] = b["62"]
    a[u1, u1] = b["66"]
    a[u0, s_b] = b["71"]
    a[u0, s_a0] = b["73"]
    a[u0, u0] = b["77"]
    return a


def _solve_block(mat: np.ndarray, rhs: np.ndarray, label: str) -> np.ndarray:
    r = linalg.qr(mat, mode="r", pivoting=True, check_finite=False)[0]
    d = np.abs(np.diag(r))
    if not np.all(np.isfinite(mat)) or d[0] == 0.0 or d[-1] <= RANK_TOL * d[0]:
        raise SandwichUnobtainable(f"block A{label} is singular")
    try:
        return linalg.solve(mat, rhs, assume_a="sym", check_finite=False)
    except (linalg.LinAlgError, ValueError):
        raise SandwichUnobtainable(f"block A{label} is singular") from None


def sandwich_influence(
    ds: Dataset, theta: ThetaAug, ps_spec: DesignSpec, or_spec: DesignSpec, est: Estimand
) -> np.ndarray:
    """Per-unit terms c'A_N^{-1} psi_i, obtained through the 2x2 block inverse.

    A_N is block lower triangular with C11 = diag(A11, A22, A33) and a
    diagonal C22, so c'A^{-1} = (-d'C21 C11^{-1}, d') with d = C22^{-1}(1,-1,1,-1).
    """
    b = _bread_blocks(ds, theta, ps_spec, or_spec, est)
    diag = np.array([b["44"], b["55"], b["66"], b["77"]])
    if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
        raise SandwichUnobtainable("diagonal block C22 is singular")
    d = np.array([1.0, -1.0, 1.0, -1.0]) / diag
    u_b = d[0] * b["41"] + d[1] * b["51"] + d[2] * b["61"] + d[3] * b["71"]
    u_a1 = d[0] * b["42"] + d[2] * b["62"]
    u_a0 = d[1] * b["53"] + d[3] * b["73"]
    a_b = -_solve_block(b["11"], u_b, "11")
    a_a1 = -_solve_block(b["22"], u_a1, "22")
    a_a0 = -_solve_block(b["33"], u_a0, "33")
    coef = np.concatenate([a_b, a_a1, a_a0, d])
    return estimating_function(ds, theta, ps_spec, or_spec, est) @ coef


def sandwich_variance(
    ds: Dataset, theta: ThetaAug, ps_spec: DesignSpec, or_spec: DesignSpec, est: Estimand
) -> VarianceEstimate:
    """(1/N) c' A_N^{-1} B_N A_N^{-T} c."""
    infl = sandwich_influence(ds, theta, ps_spec, or_spec, est)
    var = float(infl @ infl) / ds.n**2
    if not math.isfinite(var):
        raise SandwichUnobtainable("non-finite sandwich variance")
    return VarianceEstimate(SAND, var, point_estimate=theta.tau)


# ---------------------------------------------------------------------------
# resampling


def min_successful(R: int) -> int:
    return min(R, max(10, math.ceil(R / 4)))


def spread(values: np.ndarray, scale: str = SD) -> float:
    """Sample SD (ddof=1) or IQR / 1.349 of ``values``."""
    scale = scale.upper()
    if scale == SD:
        return float(np.std(values, ddof=1))
    if scale == IQR:
        q75, q25 = np.percentile(values, [75.0, 25.0])
        return float((q75 - q25) / IQR_TO_SD)
    raise ConfigError(f"unknown scale estimator {scale!r}")


def _check_R(R: int) -> None:
    if R < 2:
        raise ConfigError(f"need at least 2 replicates, got {R}")


def resample_index(n: int, seed: int, r: int) -> np.ndarray:
    return stream(seed, r).integers(0, n, n)


def _estimates_for(z, y, m0, m1, tilts, out):
    for k, (g, w0, w1) in enumerate(tilts):
        try:
            out[k] = augmented_value(z, y, m0, m1, g, w0, w1)
        except DegenerateWeights:
            out[k] = np.nan


def _tilts(estimands, e):
    res = []
    for est in estimands:
        w0, w1 = weights(est, e)
        res.append((np.asarray(tilt(est, e)), w0, w1))
    return res


def standard_bootstrap_draws(
    ds: Dataset,
    ps_spec: DesignSpec,
    or_spec: DesignSpec,
    estimands: Sequence[Estimand],
    R: int,
    seed: int,
    beta0: np.ndarray | None = None,
) -> np.ndarray:
    """R x K replicate estimates with every model refitted; NaN marks a failure.

    ``beta0`` warm-starts each logistic fit (normally the full-sample MLE).
    """
    _check_R(R)
    v = design_matrix(ds, ps_spec)
    w = design_matrix(ds, or_spec)
    z, y, n = ds.z, ds.y, ds.n
    out = np.full((R, len(estimands)), np.nan)
    for r in range(R):
        idx = resample_index(n, seed, r)
        zr, yr, wr = z[idx], y[idx], w[idx]
        try:
            e = fit_logistic(v[idx], zr, beta0=beta0).fitted
            or1, or0 = fit_arm_models(wr, zr, yr)
        except EstimationError:
            continue
        _estimates_for(zr, yr, wr @ or0.alpha, wr @ or1.alpha, _tilts(estimands, e), out[r])
    return out


def post_weighting_bootstrap_draws(
    ds: Dataset,
    e: np.ndarray,
    or_spec: DesignSpec,
    estimands: Sequence[Estimand],
    R: int,
    seed: int,
) -> np.ndarray:
    """R x K replicate estimates resampling (Z, X, Y, e) jointly; OR refitted only."""
    _check_R(R)
    w = design_matrix(ds, or_spec)
    z, y, n = ds.z, ds.y, ds.n
    tilts = _tilts(estimands, np.asarray(e, dtype=float))
    out = np.full((R, len(estimands)), np.nan)
    for r in range(R):
        idx = resample_index(n, seed, r)
        zr, yr, wr = z[idx], y[idx], w[idx]
        try:
            or1, or0 = fit_arm_models(wr, zr, yr)
        except EstimationError:
            continue
        sub = [(g[idx], w0[idx], w1[idx]) for g, w0, w1 in tilts]
        _estimates_for(zr, yr, wr @ or0.alpha, wr @ or1.alpha, sub, out[r])
    return out


def summarize_draws(
    draws: np.ndarray,
    method: str,
    scale: str = SD,
    point_estimate: float | None = None,
) -> VarianceEstimate:
    """Variance from one column of replicate estimates (failures are NaN)."""
    draws = np.asarray(draws, dtype=float)
    R = draws.shape[0]
    ok = draws[np.isfinite(draws)]
    used = ok.shape[0]
    if used < min_successful(R):
        raise TooFewSuccessfulReplicates(
            f"{method}: only {used} of {R} replicates succeeded"
        )
    s = spread(ok, scale)
    return VarianceEstimate(method, s * s, R, used, R - used, None, point_estimate)


def bootstrap_standard(
    ds: Dataset,
    ps_spec: DesignSpec,
    or_spec: DesignSpec,
    est: Estimand,
    R: int,
    seed: int,
    scale: str = SD,
) -> VarianceEstimate:
    fits = fit_models(ds, ps_spec, or_spec)
    tau = augmented_wate(ds, nuisances_for(fits, est)).tau_hat
    draws = standard_bootstrap_draws(ds, ps_spec, or_spec, [est], R, seed, fits.ps.beta)
    return summarize_draws(draws[:, 0], BOOT_I, scale, tau)


def bootstrap_post_weighting(
    ds: Dataset,
    nus: FittedNuisances,
    or_spec: DesignSpec,
    est: Estimand,
    R: int,
    seed: int,
    scale: str = SD,
) -> VarianceEstimate:
    """Post-weighting bootstrap; the reported point estimate is the full-sample one."""
    tau = augmented_wate(ds, nus, est).tau_hat
    draws = post_weighting_bootstrap_draws(ds, nus.e, or_spec, [est], R, seed)
    return summarize_draws(draws[:, 0], BOOT_II, scale, tau)


def draw_multipliers(n: int, R: int, seed: int, perturbation: str) -> np.ndarray:
    """R x n multipliers; row r comes from the stream keyed by (seed, r)."""
    _check_R(R)
    perturbation = perturbation.upper()
    xi = np.empty((R, n))
    for r in range(R):
        rng = stream(seed, r)
        if perturbation == EXP1:
            xi[r] = rng.standard_exponential(n)
        elif perturbation == RADEMACHER:
            xi[r] = 2.0 * rng.integers(0, 2, n) - 1.0
        else:
            raise ConfigError(f"unknown perturbation {perturbation!r}")
    return xi


def wild_bootstrap_draws(phi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Delta_r = N^{-1/2} sum_i xi_ri phi_i for a vector or N x K matrix of phi."""
    return xi @ np.asarray(phi, dtype=float) / math.sqrt(xi.shape[1])


def wild_variance(delta: np.ndarray, n: int, scale: str = SD) -> float:
    s = spread(delta, scale)
    return s * s / n


def wild_bootstrap(
    phi: InfluenceVector,
    tau_hat: float,
    R: int,
    seed: int,
    perturbation: str = EXP1,
    scale: str = SD,
    xi: np.ndarray | None = None,
) -> VarianceEstimate:
    """Multiplier bootstrap of an influence vector.

    ``xi`` may carry pre-drawn multipliers (from :func:`draw_multipliers`) so
    several influence vectors can share one set of perturbations.
    """
    vec = np.asarray(phi.phi, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise ValueError("influence vector has non-finite entries")
    n = vec.shape[0]
    if xi is None:
        xi = draw_multipliers(n, R, seed, perturbation)
    delta = wild_bootstrap_draws(vec, xi)
    cfg = WBConfig(phi.variant, perturbation.upper(), scale.upper())
    return VarianceEstimate(
        WB, wild_variance(delta, n, scale), xi.shape[0], xi.shape[0], 0, cfg, tau_hat
    )


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


def wald_ci(tau_hat: float, ve: VarianceEstimate | float, alpha: float = 0.05) -> WaldInterval:
    """tau_hat -/+ z_{1-alpha/2} se; ``ve`` may be a VarianceEstimate or an SE."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    se = ve.se if isinstance(ve, VarianceEstimate) else float(ve)
    half = normal_quantile(1.0 - alpha / 2.0) * se
    return WaldInterval(tau_hat - half, tau_hat + half, 1.0 - alpha)


def p_value(tau_hat: float, se: float) -> float:
    """Two-sided normal p-value for H0: tau = 0."""
    if se == 0.0:
        return 0.0 if tau_hat != 0.0 else 1.0
    return float(2.0 * ndtr(-abs(tau_hat) / se))
