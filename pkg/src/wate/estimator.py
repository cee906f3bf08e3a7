"""Augmented WATE point estimator, influence vectors and balance diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DesignSpec, design_matrix
from .errors import AllZeroWeights, ArmTooSmall, DegenerateWeights, SingleClass
from .estimands import Estimand, tilt, tilt_derivative, weights
from .glm import LinearFit, LogisticFit, fit_logistic, fit_ols

IF_I = "IF_I"
IF_II = "IF_II"


@dataclass(frozen=True, eq=False)
class ModelFits:
    """Estimand-free part of the nuisance fit: PS and both arm OR models."""

    ps: LogisticFit
    or1: LinearFit
    or0: LinearFit
    ps_design: np.ndarray
    or_design: np.ndarray

    @property
    def e(self) -> np.ndarray:
        return self.ps.fitted

    @property
    def m1(self) -> np.ndarray:
        return self.or_design @ self.or1.alpha

    @property
    def m0(self) -> np.ndarray:
        return self.or_design @ self.or0.alpha


@dataclass(frozen=True, eq=False)
class FittedNuisances:
    estimand: Estimand
    e: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    g: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    mu_g_hat: float


@dataclass(frozen=True)
class PointEstimate:
    estimand: Estimand
    tau_hat: float
    n: int


@dataclass(frozen=True, eq=False)
class InfluenceVector:
    phi: np.ndarray
    variant: str


def fit_arm_models(
    or_design: np.ndarray, z: np.ndarray, y: np.ndarray
) -> tuple[LinearFit, LinearFit]:
    """OLS fits on the treated and control rows; returns (treated, control)."""
    k = or_design.shape[1]
    treated = z == 1
    n1 = int(treated.sum())
    n0 = z.shape[0] - n1
    if n1 == 0 or n0 == 0:
        raise SingleClass("both treatment arms must be non-empty")
    if min(n1, n0) < k + 1:
        raise ArmTooSmall(
            f"arm sizes ({n0} control, {n1} treated) too small for {k} outcome coefficients"
        )
    fit1 = fit_ols(or_design[treated], y[treated], arm=1)
    fit0 = fit_ols(or_design[~treated], y[~treated], arm=0)
    return fit1, fit0


def fit_models(
    ds: Dataset,
    ps_spec: DesignSpec,
    or_spec: DesignSpec,
    beta0: np.ndarray | None = None,
) -> ModelFits:
    """Logistic PS on all rows and arm-specific OR fits."""
    v = design_matrix(ds, ps_spec)
    w = design_matrix(ds, or_spec)
    ps = fit_logistic(v, ds.z, beta0=beta0)
    or1, or0 = fit_arm_models(w, ds.z, ds.y)
    return ModelFits(ps, or1, or0, v, w)


def nuisances_for(fits: ModelFits, est: Estimand) -> FittedNuisances:
    e = fits.e
    g = np.asarray(tilt(est, e))
    w0, w1 = weights(est, e)
    return FittedNuisances(est, e, fits.m0, fits.m1, g, w0, w1, float(g.mean()))


def fit_nuisances(
    ds: Dataset, ps_spec: DesignSpec, or_spec: DesignSpec, est: Estimand
) -> FittedNuisances:
    return nuisances_for(fit_models(ds, ps_spec, or_spec), est)


def augmented_value(z, y, m0, m1, g, w0, w1) -> float:
    """Hajek-normalised augmented estimate from per-unit arrays."""
    sg = g.sum()
    a1 = z * w1
    a0 = (1.0 - z) * w0
    s1 = a1.sum()
    s0 = a0.sum()
    if sg == 0.0 or s1 == 0.0 or s0 == 0.0:
        raise DegenerateWeights("a normalising weight sum is zero")
    return float(
        g @ (m1 - m0) / sg + a1 @ (y - m1) / s1 - a0 @ (y - m0) / s0
    )


def augmented_wate(ds: Dataset, nus: FittedNuisances, est: Estimand | None = None) -> PointEstimate:
    est = nus.estimand if est is None else est
    tau = augmented_value(ds.z, ds.y, nus.m0, nus.m1, nus.g, nus.w0, nus.w1)
    return PointEstimate(est, tau, ds.n)


def influence_vector(
    ds: Dataset,
    nus: FittedNuisances,
    est: Estimand,
    tau_hat: float,
    variant: str = IF_I,
) -> InfluenceVector:
    """Plug-in influence function of the augmented estimator.

    ``IF_II`` adds the propensity-derivative term
    ``g'(e) (m1 - m0 - tau_hat) (z - e)``; for ATE it vanishes.
    """
    if variant not in (IF_I, IF_II):
        raise ValueError(f"unknown influence variant {variant!r}")
    mu = nus.mu_g_hat
    if mu == 0.0:
        raise DegenerateWeights("mean tilting value is zero")
    z, y, e = ds.z, ds.y, nus.e
    cate = nus.m1 - nus.m0
    resid = z * (y - nus.m1) / e - (1.0 - z) * (y - nus.m0) / (1.0 - e)
    phi = nus.g / mu * (resid + cate - tau_hat)
    if variant == IF_II:
        phi = phi + np.asarray(tilt_derivative(est, e)) * (cate - tau_hat) * (z - e) / mu
    return InfluenceVector(phi, variant)


def effective_sample_size(w) -> float:
    """Kish effective sample size (sum w)^2 / sum w^2."""
    w = np.asarray(w, dtype=float)
    s = w.sum()
    if s <= 0.0:
        raise AllZeroWeights("weights sum to zero")
    return float(s * s / (w @ w))


def ess_by_arm(z: np.ndarray, w0: np.ndarray, w1: np.ndarray) -> float:
    """Kish ESS of the treated weights plus that of the control weights."""
    treated = z == 1
    return effective_sample_size(w1[treated]) + effective_sample_size(w0[~treated])


def weighted_asmd(ds: Dataset, w_treated, w_control) -> np.ndarray:
    """Per-covariate |weighted mean difference| / unweighted pooled SD.

    Both weight vectors have length N; only the treated entries of
    ``w_treated`` and the control entries of ``w_control`` are used. A
    covariate with zero pooled SD reports 0 when the weighted means agree and
    ``inf`` otherwise.
    """
    treated = ds.z == 1
    w1 = np.asarray(w_treated, dtype=float)[treated]
    w0 = np.asarray(w_control, dtype=float)[~treated]
    if w1.sum() <= 0.0 or w0.sum() <= 0.0:
        raise AllZeroWeights("each arm needs positive weight mass")
    x1 = ds.covariates[treated]
    x0 = ds.covariates[~treated]
    diff = np.abs(w1 @ x1 / w1.sum() - w0 @ x0 / w0.sum())
    s1 = x1.var(axis=0, ddof=1) if x1.shape[0] > 1 else np.zeros(ds.p)
    s0 = x0.var(axis=0, ddof=1) if x0.shape[0] > 1 else np.zeros(ds.p)
    sd = np.sqrt((s1 + s0) / 2.0)
    out = np.empty(ds.p)
    zero = sd == 0.0
    out[~zero] = diff[~zero] / sd[~zero]
    out[zero] = np.where(diff[zero] == 0.0, 0.0, np.inf)
    return out
