"""Residual error distributions and the per-observation log-likelihood kernel.

Every family exposes log-scale evaluations (``logcdf``, ``logsf``,
``logpdf``) together with the density score ``dlogpdf = fdot / f``.  The
log-likelihood kernel ``q(delta, t) = delta log F(t) + (1 - delta) log(1 - F(t))``
and its first two derivatives are assembled from the ratios ``f / F`` and
``f / (1 - F)``, which stay finite far into the tails where ``F``, ``1 - F``
or ``f`` themselves underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "LinkFamily",
    "B5dReport",
    "link_eval",
    "q_eval",
    "check_b5d",
    "PROB_FLOOR",
    "DERIV_CAP",
]

PROB_FLOOR = 1e-300
DERIV_CAP = 1e12
_LOG_FLOOR = math.log(PROB_FLOOR)
_LOG_2PI_HALF = 0.5 * math.log(2.0 * math.pi)

_ALIASES = {
    "cloglog": "extreme_value",
    "extreme_value": "extreme_value",
    "logit": "logistic",
    "logistic": "logistic",
    "pareto": "pareto",
    "probit": "probit",
    "gnorm": "gen_normal",
    "gen_normal": "gen_normal",
    "cauchy": "cauchy",
}
_CLI_NAMES = {
    "extreme_value": "cloglog",
    "logistic": "logit",
    "pareto": "pareto",
    "probit": "probit",
    "gen_normal": "gnorm",
    "cauchy": "cauchy",
}


class FamilyError(ValueError):
    """Invalid family name, shape parameter or evaluation point."""


_EXP_MAX = 709.0


def _exp_capped(t):
    return np.exp(np.minimum(t, _EXP_MAX))


def _check_finite(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise FamilyError("link evaluation requires finite arguments")
    return t


def _log1mexp(a):
    """log(1 - exp(a)) for a <= 0, accurate on both sides of -log 2."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(a < -0.6931471805599453, np.log1p(-np.exp(a)), np.log(-np.expm1(a)))


def _log_upper_gamma_reg(a, x):
    """log Q(a, x) for the regularized upper incomplete gamma function.

    ``gammaincc`` underflows once ``x`` passes roughly 700; beyond that an
    asymptotic expansion is used, which is accurate to machine precision there.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    direct = special.gammaincc(a, x)
    ok = direct > 1e-280
    out[ok] = np.log(direct[ok])
    if np.any(~ok):
        xs = x[~ok]
        term = np.ones_like(xs)
        series = np.ones_like(xs)
        for k in range(1, 12):
            term = term * (a - k) / xs
            series = series + term
        out[~ok] = (a - 1.0) * np.log(xs) - xs - special.gammaln(a) + np.log(series)
    return out


@dataclass(frozen=True)
class LinkFamily:
    """Known residual distribution F of the transformation model.

    Parameters
    ----------
    kind : str
        One of ``extreme_value`` (complementary log-log), ``logistic``,
        ``pareto``, ``probit``, ``gen_normal`` or ``cauchy``.  The CLI names
        ``cloglog``, ``logit`` and ``gnorm`` are accepted as aliases.
    gamma : float, optional
        Shape parameter, required for ``pareto`` (gamma > 0) and
        ``gen_normal`` (gamma > 1).
    """

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind)
        if kind is None:
            raise FamilyError(f"unknown link family {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind in ("pareto", "gen_normal"):
            if self.gamma is None:
                raise FamilyError(f"{kind} requires a shape parameter gamma")
            g = float(self.gamma)
            if not math.isfinite(g):
                raise FamilyError("gamma must be finite")
            if kind == "pareto" and g <= 0:
                raise FamilyError(
                    "pareto requires gamma > 0; use extreme_value for the gamma -> 0 limit"
                )
            if kind == "gen_normal" and g <= 1:
                raise FamilyError("gen_normal requires gamma > 1")
            object.__setattr__(self, "gamma", g)
        elif self.gamma is not None:
            raise FamilyError(f"{kind} takes no shape parameter")

    @classmethod
    def from_string(cls, spec: str) -> "LinkFamily":
        """Parse ``cloglog``, ``logit``, ``pareto:<g>``, ``probit``, ``gnorm:<g>`` or ``cauchy``."""
        name, _, arg = spec.strip().partition(":")
        kind = _ALIASES.get(name.lower())
        if kind is None:
            raise FamilyError(f"unknown link {spec!r}")
        if kind in ("pareto", "gen_normal"):
            if not arg:
                raise FamilyError(f"link {name} needs a shape parameter, e.g. {name}:2")
            try:
                gamma = float(arg)
            except ValueError:
                raise FamilyError(f"bad shape parameter in {spec!r}") from None
            return cls(kind, gamma)
        if arg:
            raise FamilyError(f"link {name} takes no shape parameter")
        return cls(kind)

    def __str__(self):
        name = _CLI_NAMES[self.kind]
        if self.gamma is None:
            return name
        return f"{name}:{self.gamma:g}"

    # -- log-scale primitives -------------------------------------------

    @property
    def _log_rgamma(self):
        g = self.gamma
        return math.log(g) - math.log(2.0) - math.lgamma(1.0 / g)

    def logcdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "extreme_value":
            return _log1mexp(-_exp_capped(t))
        if k == "logistic":
            return -np.logaddexp(0.0, -t)
        if k == "pareto":
            return _log1mexp(self.logsf(t))
        if k == "probit":
            return special.log_ndtr(t)
        if k == "gen_normal":
            return self._gn_logtail(-t)
        return np.log(np.arctan2(1.0, -t) / np.pi)

    def logsf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "extreme_value":
            return -_exp_capped(t)
        if k == "logistic":
            return -np.logaddexp(0.0, t)
        if k == "pareto":
            g = self.gamma
            return -np.logaddexp(0.0, math.log(g) + t) / g
        if k == "probit":
            return special.log_ndtr(-t)
        if k == "gen_normal":
            return self._gn_logtail(t)
        return np.log(np.arctan2(1.0, t) / np.pi)

    def _gn_logtail(self, s):
        # log P(e > s) for the symmetric generalized normal law
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        a = 1.0 / self.gamma
        logq = _log_upper_gamma_reg(a, np.abs(flat) ** self.gamma) - math.log(2.0)
        out = np.where(flat > 0, logq, _log1mexp(logq))
        return out.reshape(s.shape) if s.ndim else out[0]

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "extreme_value":
            return t - _exp_capped(t)
        if k == "logistic":
            return -np.logaddexp(0.0, t) - np.logaddexp(0.0, -t)
        if k == "pareto":
            g = self.gamma
            return t - (1.0 / g + 1.0) * np.logaddexp(0.0, math.log(g) + t)
        if k == "probit":
            return -0.5 * t * t - _LOG_2PI_HALF
        if k == "gen_normal":
            return self._log_rgamma - np.abs(t) ** self.gamma
        return -np.log(np.pi) - np.log1p(t * t)

    def dlogpdf(self, t):
        """Density score fdot / f."""
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "extreme_value":
            return -np.expm1(np.minimum(t, _EXP_MAX))
        if k == "logistic":
            return -np.tanh(0.5 * t)
        if k == "pareto":
            g = self.gamma
            # 1 - (1 + g) e^t / (1 + g e^t), written to avoid overflow
            p = special.expit(math.log(g) + t)
            return 1.0 - (1.0 + g) / g * p
        if k == "probit":
            return -t
        if k == "gen_normal":
            g = self.gamma
            return -g * np.sign(t) * np.abs(t) ** (g - 1.0)
        return -2.0 * t / (1.0 + t * t)

    # -- plain evaluations ------------------------------------------------

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "logistic":
            return special.expit(t)
        if k == "probit":
            return special.ndtr(t)
        if k == "cauchy":
            return np.arctan2(1.0, -t) / np.pi
        return np.exp(self.logcdf(t))

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k == "logistic":
            return special.expit(-t)
        if k == "probit":
            return special.ndtr(-t)
        if k == "cauchy":
            return np.arctan2(1.0, t) / np.pi
        return np.exp(self.logsf(t))

    def pdf(self, t):
        return np.exp(self.logpdf(t))

    def fdot(self, t):
        return self.pdf(t) * self.dlogpdf(t)

    def ppf(self, p):
        """Quantile function F^{-1}."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise FamilyError("quantile requires probabilities strictly inside (0, 1)")
        k = self.kind
        if k == "extreme_value":
            return np.log(-np.log1p(-p))
        if k == "logistic":
            return special.logit(p)
        if k == "pareto":
            g = self.gamma
            return np.log(np.expm1(-g * np.log1p(-p)) / g)
        if k == "probit":
            return special.ndtri(p)
        if k == "gen_normal":
            a = 1.0 / self.gamma
            mag = special.gammaincinv(a, np.abs(2.0 * p - 1.0)) ** a
            return np.sign(p - 0.5) * mag
        return np.tan(np.pi * (p - 0.5))


def link_eval(family: LinkFamily, t):
    """Return ``(F(t), f(t), fdot(t))``."""
    t = _check_finite(t)
    return family.cdf(t), family.pdf(t), family.fdot(t)


class QValues(NamedTuple):
    q: np.ndarray
    q1: np.ndarray
    q2: np.ndarray


def q_eval(family: LinkFamily, delta, t) -> QValues:
    """Log-likelihood kernel q(delta, t) and its first two t-derivatives.

    Probabilities are floored at ``PROB_FLOOR`` inside the logarithm and the
    derivatives are capped at ``DERIV_CAP`` in absolute value.
    """
    t = _check_finite(t)
    delta = np.asarray(delta)
    d1 = delta.astype(bool)
    logF = family.logcdf(t)
    logS = family.logsf(t)
    logf = family.logpdf(t)
    g = family.dlogpdf(t)
    t, d1, logF, logS, logf, g = np.broadcast_arrays(t, d1, logF, logS, logf, g)
    logp = np.where(d1, logF, logS)
    q = np.maximum(logp, _LOG_FLOOR)
    with np.errstate(over="ignore", invalid="ignore"):
        if family.kind == "extreme_value":
            q1, q2 = _cloglog_derivs(d1, t)
        elif family.kind == "logistic":
            p = special.expit(t)
            q1 = np.where(d1, 1.0 - p, -p)
            q2 = -p * special.expit(-t)
        else:
            ratio = np.exp(np.minimum(logf - logp, 700.0))
            q1 = np.where(d1, ratio, -ratio)
            q2 = np.where(d1, ratio * (g - ratio), -ratio * (g + ratio))
    q1 = np.clip(q1, -DERIV_CAP, DERIV_CAP)
    q2 = np.clip(q2, -DERIV_CAP, DERIV_CAP)
    return QValues(q, q1, q2)


def _cloglog_derivs(d1, t):
    # closed forms in x = e^t and u = e^{-x}, free of tail cancellation
    x = np.exp(np.minimum(t, 700.0))
    u = np.exp(-x)
    one_minus_u = -np.expm1(-x)
    # 1 - u - x, with a series where it cancels
    xs = np.where(x < 1e-2, x, 0.0)
    series = xs * xs * (-0.5 + xs * (1.0 / 6.0 - xs * (1.0 / 24.0 - xs / 120.0)))
    gap = np.where(x < 1e-2, series, one_minus_u - x)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        q1_event = np.where(x > 0, x * u / one_minus_u, 1.0)
        q2_event = np.where(x > 0, x * gap * u / (one_minus_u * one_minus_u), 0.0)
        # for large x, u underflows first: q2 ~ -x (x - 1) e^{-x}
        big = x > 30.0
        q2_event = np.where(big, -np.exp(np.log(np.where(big, x, 2.0)) + np.log(np.where(big, x - 1.0, 1.0)) - x), q2_event)
    return np.where(d1, q1_event, -x), np.where(d1, q2_event, -x)


class B5dReport(NamedTuple):
    min1: float
    min2: float
    satisfied: bool
    argmin1: float
    argmin2: float


def check_b5d(family: LinkFamily, lo=-10.0, hi=10.0, step=0.01) -> B5dReport:
    """Grid check of the strict-concavity condition on q(delta, .).

    The condition ``f^2 - fdot F > 0`` and ``f^2 + fdot (1 - F) > 0`` is
    checked through the scale-free margins ``(f^2 - fdot F) / (f F)`` and
    ``(f^2 + fdot (1 - F)) / (f (1 - F))``, which carry the same sign but do
    not underflow in the tails.  ``min1`` and ``min2`` are the grid minima of
    these margins.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo or step <= 0:
        raise FamilyError("grid needs finite endpoints lo <= hi and step > 0")
    t = lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)
    g = family.dlogpdf(t)
    logf = family.logpdf(t)
    r1 = np.exp(logf - family.logcdf(t))
    r0 = np.exp(logf - family.logsf(t))
    m1 = r1 - g
    m2 = r0 + g
    i1 = int(np.argmin(m1))
    i2 = int(np.argmin(m2))
    return B5dReport(
        float(m1[i1]), float(m2[i2]), bool(m1[i1] > 0 and m2[i2] > 0), float(t[i1]), float(t[i2])
    )
