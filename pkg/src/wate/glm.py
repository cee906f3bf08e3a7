"""Logistic propensity and linear outcome fits, with their score rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import Diverged, RankDeficientDesign, SingleClass, TooFewObservations

PROB_CLAMP = 1e-12
RANK_TOL = 1e-10
SCORE_TOL = 1e-10
MAX_ITER = 100
DIVERGENCE_BOUND = 1e6
_ETA_LIMIT = float(np.log((1.0 - PROB_CLAMP) / PROB_CLAMP))


@dataclass(frozen=True, eq=False)
class LogisticFit:
    beta: np.ndarray
    fitted: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    initial_loglik: float


@dataclass(frozen=True, eq=False)
class LinearFit:
    alpha: np.ndarray
    which_arm: int | None = None

    def predict(self, design: np.ndarray) -> np.ndarray:
        return design @ self.alpha


def _check_rank(design: np.ndarray) -> None:
    # Pivoted QR puts the largest remaining column norm on each diagonal entry,
    # so a tiny trailing |R_kk| relative to |R_11| flags a dependent column.
    r = linalg.qr(design, mode="r", pivoting=True, check_finite=False)[0]
    d = np.abs(np.diag(r))
    if d.size < design.shape[1] or d[0] == 0.0 or d[-1] <= RANK_TOL * d[0]:
        raise RankDeficientDesign(
            f"design with {design.shape[1]} columns is not of full column rank"
        )


def _loglik(eta: np.ndarray, z: np.ndarray) -> float:
    return float(np.sum(z * eta - np.logaddexp(0.0, eta)))


def fit_logistic(
    design: np.ndarray,
    z: np.ndarray,
    beta0: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
    tol: float = SCORE_TOL,
) -> LogisticFit:
    """Maximum-likelihood logistic regression by IRLS with step halving.

    Iterates until ``max|X'(z - p)| / N <= tol`` or ``max_iter`` Newton steps.
    ``beta0`` is an optional starting value (warm start); it changes the path,
    not the optimum.
    """
    x = np.asarray(design, dtype=float)
    z = np.asarray(z, dtype=float)
    n, k = x.shape
    n1 = z.sum()
    if n1 == 0 or n1 == n:
        raise SingleClass("treatment indicator has a single class")
    if n < k:
        raise RankDeficientDesign(f"{n} rows for {k} logistic coefficients")
    _check_rank(x)

    beta = np.zeros(k) if beta0 is None else np.array(beta0, dtype=float)
    eta = x @ beta
    ll = _loglik(eta, z)
    ll_start = ll
    converged = False
    it = 0
    while True:
        p = expit(eta)
        score = x.T @ (z - p)
        if np.max(np.abs(score)) / n <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        w = p * (1.0 - p)
        # X'WX = R'R; Newton direction solves R'R d = score.
        r = np.linalg.qr(np.sqrt(w)[:, None] * x, mode="r")
        try:
            u = linalg.solve_triangular(r, score, trans="T", check_finite=False)
            step = linalg.solve_triangular(r, u, check_finite=False)
        except linalg.LinAlgError:
            raise RankDeficientDesign("singular weighted design in IRLS") from None
        if not np.all(np.isfinite(step)):
            raise Diverged("non-finite Newton step")
        t = 1.0
        slack = 1e-12 * max(1.0, abs(ll))
        for _ in range(40):
            cand = beta + t * step
            eta_c = x @ cand
            ll_c = _loglik(eta_c, z)
            if ll_c >= ll - slack:
                break
            t *= 0.5
        else:
            # no ascent along the Newton direction: numerically at the optimum
            break
        beta, eta, ll = cand, eta_c, ll_c
        it += 1
        if np.max(np.abs(beta)) > DIVERGENCE_BOUND:
            raise Diverged(f"|beta| exceeded {DIVERGENCE_BOUND:g}; separation suspected")

    # The score vanishes along a separating direction before |beta| gets
    # large, so separation shows up as linear predictors beyond the clamp.
    if np.max(np.abs(eta)) > _ETA_LIMIT:
        raise Diverged("fitted probabilities reached 0 or 1; separation suspected")
    fitted = np.clip(expit(eta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return LogisticFit(beta, fitted, converged, it, ll, ll_start)


def fit_ols(design: np.ndarray, y: np.ndarray, arm: int | None = None) -> LinearFit:
    """Least squares via column-pivoted QR."""
    x = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = x.shape
    if n < k:
        raise TooFewObservations(f"{n} rows for {k} regression coefficients")
    q, r, piv = linalg.qr(x, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(r))
    if d[0] == 0.0 or d[-1] <= RANK_TOL * d[0]:
        raise RankDeficientDesign(
            f"outcome design with {k} columns is not of full column rank"
        )
    coef = linalg.solve_triangular(r, q.T @ y, check_finite=False)
    alpha = np.empty(k)
    alpha[piv] = coef
    return LinearFit(alpha, arm)


def logistic_score(fit: LogisticFit, design: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Rows ``(z_i - e_i) v_i``."""
    return (np.asarray(z, dtype=float) - fit.fitted)[:, None] * design


def ols_score(fit: LinearFit, design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Rows ``(y_i - w_i'alpha) w_i``; arm masking is left to the caller."""
    return (np.asarray(y, dtype=float) - design @ fit.alpha)[:, None] * design
