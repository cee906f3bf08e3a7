"""Tilting functions g(e), their derivatives and the balancing weights.

All functions accept scalars or arrays of propensity scores and are
vectorised over them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

TAGS = ("ATE", "ATT", "ATC", "ATO", "ATM", "ATEN", "TRIM")


@dataclass(frozen=True)
class Estimand:
    tag: str
    alpha: float | None = None

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in TAGS:
            raise ConfigError(f"unknown estimand {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        if tag == "TRIM":
            if self.alpha is None or not 0.0 < float(self.alpha) < 0.5:
                raise ConfigError(f"trimming threshold must lie in (0, 0.5), got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ConfigError(f"{tag} takes no parameter")

    @property
    def name(self) -> str:
        if self.tag == "TRIM":
            return f"trim:{self.alpha:g}"
        return self.tag.lower()

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str) -> "Estimand":
        """Parse ``ate``, ``att``, ..., ``aten`` or ``trim:<alpha>``."""
        text = text.strip().lower()
        if text.startswith("trim"):
            _, sep, rest = text.partition(":")
            if not sep:
                raise ConfigError("trimming needs a threshold, e.g. trim:0.1")
            try:
                alpha = float(rest)
            except ValueError:
                raise ConfigError(f"bad trimming threshold {rest!r}") from None
            return cls("TRIM", alpha)
        return cls(text.upper())


ATE = Estimand("ATE")
ATT = Estimand("ATT")
ATC = Estimand("ATC")
ATO = Estimand("ATO")
ATM = Estimand("ATM")
ATEN = Estimand("ATEN")

PAPER_ESTIMANDS = (ATE, ATT, ATO, ATM, ATEN)


def _check(e):
    e = np.asarray(e, dtype=float)
    if not np.all((e > 0.0) & (e < 1.0)):
        raise DomainError("propensity scores must lie strictly inside (0, 1)")
    return e


def _out(v, like):
    return float(v) if np.ndim(like) == 0 else v


def tilt(est: Estimand, e):
    """g(e)."""
    e_ = _check(e)
    tag = est.tag
    if tag == "ATE":
        g = np.ones_like(e_)
    elif tag == "ATT":
        g = e_.copy()
    elif tag == "ATC":
        g = 1.0 - e_
    elif tag == "ATO":
        g = e_ * (1.0 - e_)
    elif tag == "ATM":
        g = np.minimum(e_, 1.0 - e_)
    elif tag == "ATEN":
        g = -e_ * np.log(e_) - (1.0 - e_) * np.log1p(-e_)
    else:
        g = ((e_ >= est.alpha) & (e_ <= 1.0 - est.alpha)).astype(float)
    return _out(g, e)


def tilt_derivative(est: Estimand, e):
    """dg/de; ATM uses 0 at its kink and TRIM the almost-everywhere value 0."""
    e_ = _check(e)
    tag = est.tag
    if tag in ("ATE", "TRIM"):
        d = np.zeros_like(e_)
    elif tag == "ATT":
        d = np.ones_like(e_)
    elif tag == "ATC":
        d = -np.ones_like(e_)
    elif tag == "ATO":
        d = 1.0 - 2.0 * e_
    elif tag == "ATM":
        d = np.sign(0.5 - e_)
    else:
        d = np.log1p(-e_) - np.log(e_)
    return _out(d, e)


def weights(est: Estimand, e):
    """(omega_0, omega_1) = (g/(1-e), g/e)."""
    e_ = _check(e)
    tag = est.tag
    # closed forms avoid the rounding of g/e for the bounded estimands
    if tag == "ATO":
        w0, w1 = e_.copy(), 1.0 - e_
    elif tag == "ATT":
        w0, w1 = e_ / (1.0 - e_), np.ones_like(e_)
    elif tag == "ATC":
        w0, w1 = np.ones_like(e_), (1.0 - e_) / e_
    else:
        g = np.asarray(tilt(est, e_))
        w0, w1 = g / (1.0 - e_), g / e_
    return _out(w0, e), _out(w1, e)


def tilt_gradient(est: Estimand, e: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Rows of dg/dbeta' for a logistic propensity: g'(e) e (1 - e) v'."""
    e = np.asarray(e, dtype=float)
    return (np.asarray(tilt_derivative(est, e)) * e * (1.0 - e))[:, None] * design
