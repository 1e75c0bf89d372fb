"""Penalized maximum likelihood for the partly linear transformation model.

The linear predictor is ``theta = beta'z + h(w) + H(v)`` and
``P(delta = 1 | v, z, w) = F(theta)``.  The objective is the empirical mean
log-likelihood minus ``lambda^2 J^2(h)``.  It is maximized by alternating an
ICM update of the step transformation H (S1) with a damped Newton ascent
over the regression coefficients and the spline coefficients of h (S2).

Internally the columns of ``z`` are centered; this only moves a constant
between ``beta'z`` and ``H`` and leaves every fitted probability unchanged.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .families import LinkFamily, q_eval
from .isotonic import (
    FenchelResiduals,
    SiteLayout,
    StepTransform,
    _fenchel_from_scores,
    _icm_core,
    initial_transform,
)
from .splines import SmoothEffect, SplineBasis, make_basis, penalty_matrix

__all__ = [
    "FitConfig",
    "ModelParams",
    "FitResult",
    "loglik",
    "penalized_objective",
    "score_and_hessian",
    "beta_h_step",
    "fit",
    "NumericalError",
]

H_SUP_WARN = 10.0


class NumericalError(ArithmeticError):
    """The objective became non-finite during optimization."""


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    ``lambda_rule`` is ``"n_power"`` for ``lambda = n ** (-1/3)`` or a fixed
    positive number.  ``n_knots`` of ``None`` picks the interior knot count
    from the sample size.
    """

    lambda_rule: str | float = "n_power"
    inner_tol: float = 1e-6
    outer_tol: float = 1e-8
    fenchel_tol: float = 1e-6
    max_outer: int = 200
    max_inner: int = 50
    icm_max_iter: int = 500
    n_knots: int | None = None
    knot_multiplier: float = 2.0
    ridge_floor: float = 1e-10

    def __post_init__(self):
        for name in ("inner_tol", "outer_tol", "fenchel_tol", "knot_multiplier", "ridge_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_rule != "n_power":
            lam = float(self.lambda_rule)
            if not (lam >= 0 and math.isfinite(lam)):
                raise ValueError("fixed lambda must be a finite nonnegative number")

    def lam(self, n: int) -> float:
        if self.lambda_rule == "n_power":
            return n ** (-1.0 / 3.0)
        return float(self.lambda_rule)


@dataclass(frozen=True)
class ModelParams:
    """Regression vector, smooth effect and step transformation."""

    beta: np.ndarray
    h: SmoothEffect
    H: StepTransform

    def linear_predictor(self, data: Dataset) -> np.ndarray:
        eta = self.h(data.w) + self.H(data.v)
        if data.d:
            eta = eta + data.z @ self.beta
        return eta


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    loglik: float
    penalty: float
    objective: float
    outer_iters: int
    fenchel: FenchelResiduals
    grad_norm: float
    converged: bool
    lam: float
    trace: list = field(repr=False)
    n_informative: int = 0

    @property
    def beta(self) -> np.ndarray:
        return self.params.beta


def _active_mask(data: Dataset) -> np.ndarray:
    return SiteLayout.from_data(data.v, data.delta).active


def loglik(data: Dataset, params: ModelParams, family: LinkFamily, informative_only=False) -> float:
    """Mean log-likelihood ``(1/n) sum_i q(delta_i, theta_i)``.

    With ``informative_only`` the observations before the first event site
    and after the last non-event site are skipped; their contribution is
    zero once the transformation is profiled out.  The divisor stays ``n``.
    """
    if params.beta.shape != (data.d,):
        raise ValueError(f"beta has shape {params.beta.shape}, data have d={data.d}")
    eta = params.linear_predictor(data)
    q = q_eval(family, data.delta, eta).q
    if informative_only:
        q = q[_active_mask(data)]
    return float(q.sum() / data.n)


def penalized_objective(data, params, family, lam, informative_only=False) -> float:
    """``loglik - lam**2 * J^2(h)``."""
    return loglik(data, params, family, informative_only) - lam**2 * params.h.roughness()


def score_and_hessian(data, params, family, lam, informative_only=False):
    """Gradient and Hessian of the penalized objective in ``(beta, coeffs)``.

    The smooth effect is taken as centered on ``data.w``, so the coefficient
    columns of the design are ``B(w_i) - mean_j B(w_j)``.

    Returns
    -------
    grad : ndarray, shape (d + K,)
    hess : ndarray, shape (d + K, d + K)
    """
    basis = params.h.basis
    Bw = basis.design(data.w)
    Bc = Bw - Bw.mean(axis=0)
    X = np.hstack([data.z, Bc])
    c = params.h.coeffs
    eta = X @ np.concatenate([params.beta, c]) + params.H(data.v)
    qv = q_eval(family, data.delta, eta)
    q1, q2 = qv.q1, qv.q2
    if informative_only:
        act = _active_mask(data)
        X, q1, q2 = X[act], q1[act], q2[act]
    omega = penalty_matrix(basis)
    d = data.d
    grad = X.T @ q1 / data.n
    grad[d:] -= 2 * lam**2 * (omega @ c)
    hess = X.T @ (q2[:, None] * X) / data.n
    hess[d:, d:] -= 2 * lam**2 * omega
    return grad, 0.5 * (hess + hess.T)


class _Problem:
    """Sorted sample with everything that stays fixed during one fit."""

    def __init__(self, data: Dataset, family: LinkFamily, basis: SplineBasis, lam: float, center_z=True):
        order = np.argsort(data.v, kind="stable")
        self.data = data.subset(order)
        self.family = family
        self.basis = basis
        self.lam2 = lam**2
        self.n = data.n
        self.d = data.d
        self.layout = SiteLayout.from_data(self.data.v, self.data.delta)
        act = self.layout.active
        self.zbar = self.data.z.mean(axis=0) if (self.d and center_z) else np.zeros(self.d)
        Bw = basis.design(self.data.w)
        self.Bbar = Bw.mean(axis=0)
        X = np.hstack([self.data.z - self.zbar, Bw - self.Bbar])
        self.X = np.ascontiguousarray(X[act])
        self.delta = self.data.delta[act]
        self.site = self.layout.site_of[act] - self.layout.first
        self.n_sites = self.layout.last - self.layout.first + 1
        self.omega = penalty_matrix(basis)
        self.p = self.d + basis.K
        gauge = np.zeros(self.p)
        gauge[self.d :] = 1.0
        self.gauge = gauge / np.linalg.norm(gauge)

    def project(self, x):
        return x - (x @ self.gauge) * self.gauge

    def penalty(self, theta):
        c = theta[self.d :]
        return self.lam2 * float(c @ self.omega @ c)

    def objective(self, theta, Hs):
        eta = self.X @ theta + Hs[self.site]
        return q_eval(self.family, self.delta, eta).q.sum() / self.n - self.penalty(theta)

    def derivs(self, theta, Hs):
        eta = self.X @ theta + Hs[self.site]
        qv = q_eval(self.family, self.delta, eta)
        c = theta[self.d :]
        obj = qv.q.sum() / self.n - self.lam2 * float(c @ self.omega @ c)
        g = self.X.T @ qv.q1 / self.n
        g[self.d :] -= 2 * self.lam2 * (self.omega @ c)
        A = -(self.X.T @ (qv.q2[:, None] * self.X)) / self.n
        A[self.d :, self.d :] += 2 * self.lam2 * self.omega
        return obj, self.project(g), 0.5 * (A + A.T)

    def fenchel(self, theta, Hs):
        eta = self.X @ theta + Hs[self.site]
        q1 = q_eval(self.family, self.delta, eta).q1
        s = np.bincount(self.site, weights=q1, minlength=self.n_sites) / self.n
        return _fenchel_from_scores(s, Hs)

    def newton(self, theta, Hs, tol, max_iter, ridge_floor):
        """Damped Newton ascent in (beta, coeffs) with H fixed."""
        obj, g, A = self.derivs(theta, Hs)
        if not np.isfinite(obj):
            raise NumericalError(f"non-finite objective at beta={theta[: self.d]}")
        trace = []
        gnorm = float(np.linalg.norm(g))
        for _ in range(max_iter):
            if gnorm <= tol:
                break
            scale = max(1.0, float(np.trace(A)) / self.p)
            ridge = ridge_floor * scale
            moved = False
            for _ in range(12):
                try:
                    step = np.linalg.solve(A + ridge * np.eye(self.p), g)
                except np.linalg.LinAlgError:
                    ridge *= 10.0
                    continue
                step = self.project(step)
                if not np.all(np.isfinite(step)) or g @ step <= 0:
                    ridge *= 10.0
                    continue
                alpha = 1.0
                for _ in range(31):
                    cand = theta + alpha * step
                    new = self.objective(cand, Hs)
                    if np.isfinite(new) and new >= obj:
                        moved = True
                        break
                    alpha *= 0.5
                if moved:
                    break
                ridge *= 10.0
            if not moved:
                break
            theta = cand
            obj, g, A = self.derivs(theta, Hs)
            if not np.isfinite(obj):
                raise NumericalError(f"non-finite objective at beta={theta[: self.d]}")
            gnorm = float(np.linalg.norm(g))
            trace.append(obj)
        return theta, obj, gnorm, trace

    def icm(self, theta, Hs, tol, max_iter):
        off = self.X @ theta
        lam_pen = self.penalty(theta)
        Hs, info = _icm_core(self.site, self.delta, off, self.n, Hs, self.family, tol, max_iter)
        return Hs, info.loglik - lam_pen, info

    def to_params(self, theta, Hs) -> ModelParams:
        beta = theta[: self.d].copy()
        c = theta[self.d :].copy()
        h = SmoothEffect(self.basis, c, float(self.Bbar @ c), self.omega)
        H = StepTransform(self.layout.sites, self.layout.extend(Hs - beta @ self.zbar))
        return ModelParams(beta, h, H)

    def from_params(self, params: ModelParams):
        beta = np.asarray(params.beta, dtype=float)
        if _same_basis(params.h.basis, self.basis):
            c = np.asarray(params.h.coeffs, dtype=float)
        else:
            c = np.zeros(self.basis.K)
        Hs = params.H(self.layout.sites)[self.layout.first : self.layout.last + 1] + beta @ self.zbar
        return np.concatenate([beta, c]), np.maximum.accumulate(Hs)


def _same_basis(a: SplineBasis, b: SplineBasis) -> bool:
    return (
        a.order == b.order
        and a.boundary == b.boundary
        and a.interior_knots.shape == b.interior_knots.shape
        and np.array_equal(a.interior_knots, b.interior_knots)
    )


def beta_h_step(data, params, family, lam, config: FitConfig | None = None):
    """One S2 step: maximize over ``(beta, h)`` with the transformation fixed.

    Returns the updated ``(beta, SmoothEffect)`` with ``h`` centered on the
    sample.
    """
    config = config or FitConfig()
    prob = _Problem(data, family, params.h.basis, lam, center_z=False)
    theta, Hs = prob.from_params(params)
    theta, _, _, _ = prob.newton(theta, Hs, config.inner_tol, config.max_inner, config.ridge_floor)
    new = prob.to_params(theta, Hs)
    return new.beta, new.h


def fit(
    data: Dataset,
    family: LinkFamily,
    config: FitConfig | None = None,
    seed: int = 0,
    *,
    basis: SplineBasis | None = None,
    init: ModelParams | None = None,
) -> FitResult:
    """Penalized MLE of ``(beta, h, H)`` by S1/S2 alternation.

    Parameters
    ----------
    data : Dataset
        At least 20 records, with some ``delta = 1`` preceding some
        ``delta = 0`` in monitoring-time order.
    family : LinkFamily
    config : FitConfig, optional
    seed : int
        Seed for knot placement.
    basis : SplineBasis, optional
        Reuse a basis instead of placing knots on ``data.w``.
    init : ModelParams, optional
        Warm start; by default ``beta = 0``, ``h = 0`` and H from the
        isotonic fit of the indicators.

    Returns
    -------
    FitResult
        ``converged`` is False when ``max_outer`` sweeps did not meet the
        stopping rule; the last iterate is returned in that case.
    """
    config = config or FitConfig()
    if data.n < 20:
        raise ValueError("fit needs at least 20 observations")
    if basis is None:
        basis = make_basis(data.w, config.n_knots, config.knot_multiplier, seed)
    lam = config.lam(data.n)
    prob = _Problem(data, family, basis, lam)
    if init is None:
        theta = np.zeros(prob.p)
        H0 = initial_transform(prob.layout, prob.data.delta, family)
        Hs = np.maximum.accumulate(H0[prob.layout.first : prob.layout.last + 1])
    else:
        theta, Hs = prob.from_params(init)

    tol = config.fenchel_tol
    obj = prob.objective(theta, Hs)
    trace = [obj]
    converged = False
    gnorm = np.inf
    res = None
    k = 0
    for k in range(1, config.max_outer + 1):
        prev = obj
        Hs, obj, _ = prob.icm(theta, Hs, tol, config.icm_max_iter)
        trace.append(obj)
        theta, obj, gnorm, _ = prob.newton(
            theta, Hs, config.inner_tol, config.max_inner, config.ridge_floor
        )
        trace.append(obj)
        res = prob.fenchel(theta, Hs)
        small_change = abs(obj - prev) <= config.outer_tol * max(1.0, abs(obj))
        if small_change and res.within(tol) and gnorm <= config.inner_tol:
            converged = True
            break

    params = prob.to_params(theta, Hs)
    pen = prob.penalty(theta)
    if np.max(np.abs(params.h(np.linspace(*basis.boundary, 201)))) > H_SUP_WARN:
        warnings.warn("fitted smooth effect exceeds 10 in absolute value", RuntimeWarning)
    return FitResult(
        params=params,
        loglik=obj + pen,
        penalty=pen,
        objective=obj,
        outer_iters=k,
        fenchel=res,
        grad_norm=gnorm,
        converged=converged,
        lam=lam,
        trace=trace,
        n_informative=int(prob.delta.size),
    )
