"""Monotone estimation of the transformation.

Weighted pool-adjacent-violators, greatest convex minorant slopes of a
cumulative sum diagram, the single-sample current status NPMLE, and the
damped self-induced iterative convex minorant (ICM) update of the step
transformation for fixed linear and smooth effects.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .families import LinkFamily, q_eval

__all__ = [
    "pava",
    "gcm_left_derivative",
    "npmle_single_sample",
    "StepTransform",
    "SiteLayout",
    "icm_h_step",
    "fenchel_residuals",
    "truncate_transform",
    "initial_transform",
    "ConvexityError",
    "ProvisionError",
]

# relative floor on ICM curvature weights; guards underflow in the far tails
WEIGHT_FLOOR = 1e-14
LINE_SEARCH_HALVINGS = 30


class ConvexityError(ArithmeticError):
    """Log-likelihood kernel is not strictly concave at a visited point."""


class ProvisionError(ValueError):
    """No event indicator 1 precedes an indicator 0; the transform is unidentified."""


@njit(cache=True)
def _pava_kernel(y, w):
    n = y.shape[0]
    val = np.empty(n)
    wt = np.empty(n)
    cnt = np.empty(n, dtype=np.int64)
    nb = 0
    for i in range(n):
        val[nb] = y[i]
        wt[nb] = w[i]
        cnt[nb] = 1
        nb += 1
        while nb > 1 and val[nb - 2] > val[nb - 1]:
            wsum = wt[nb - 2] + wt[nb - 1]
            val[nb - 2] = (wt[nb - 2] * val[nb - 2] + wt[nb - 1] * val[nb - 1]) / wsum
            wt[nb - 2] = wsum
            cnt[nb - 2] += cnt[nb - 1]
            nb -= 1
    out = np.empty(n)
    pos = 0
    for b in range(nb):
        for _ in range(cnt[b]):
            out[pos] = val[b]
            pos += 1
    return out


def pava(y, w=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit (pool adjacent violators).

    Parameters
    ----------
    y : array_like, shape (n,)
        Values to be fitted.
    w : array_like, shape (n,), optional
        Strictly positive weights; unit weights by default.
    """
    y = np.ascontiguousarray(y, dtype=float)
    if w is None:
        w = np.ones_like(y)
    else:
        w = np.ascontiguousarray(w, dtype=float)
        if w.shape != y.shape:
            raise ValueError("weights must match values")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
    if y.size == 0:
        return y.copy()
    return _pava_kernel(y, w)


def gcm_left_derivative(x, y) -> np.ndarray:
    """Left derivative of the greatest convex minorant of a cusum diagram.

    The diagram is the origin followed by the points ``(x[j], y[j])``; ``x``
    must be nondecreasing and start at or after 0.  Points sharing an
    ``x`` coordinate are merged by summing their ``y`` increments, so the
    slope reported for each of them is that of the merged segment.

    Returns
    -------
    slopes : ndarray, shape (n,)
        Slope of the minorant on the segment ending at each ``x[j]``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    dx = np.diff(x, prepend=0.0)
    dy = np.diff(y, prepend=0.0)
    if np.any(dx < 0):
        raise ValueError("diagram abscissae must be nondecreasing from the origin")
    pos = dx > 0
    if not np.any(pos):
        raise ValueError("diagram has zero total width")
    # each zero-width increment joins the nearest preceding segment,
    # or the first positive one if it precedes all of them
    seg = np.cumsum(pos) - 1
    seg[seg < 0] = 0
    nseg = int(pos.sum())
    sdx = np.bincount(seg, weights=dx, minlength=nseg)
    sdy = np.bincount(seg, weights=dy, minlength=nseg)
    slopes = pava(sdy / sdx, sdx)
    return slopes[seg]


def npmle_single_sample(delta_sorted) -> np.ndarray:
    """NPMLE of the event-time distribution at the ordered monitoring times.

    This is the unit-weight isotonic regression of the indicators.
    """
    delta = np.asarray(delta_sorted, dtype=float)
    if delta.size == 0:
        raise ValueError("empty sample")
    if np.any((delta != 0) & (delta != 1)):
        raise ValueError("indicators must be 0 or 1")
    return pava(delta)


@dataclass(frozen=True)
class StepTransform:
    """Right-continuous nondecreasing step function.

    ``H(t) = values[j]`` for ``jump_sites[j] <= t < jump_sites[j + 1]``; the
    function is constant beyond the extreme sites.
    """

    jump_sites: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        sites = np.asarray(self.jump_sites, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if sites.ndim != 1 or sites.shape != vals.shape or sites.size == 0:
            raise ValueError("jump_sites and values must be equal-length nonempty vectors")
        if np.any(np.diff(sites) <= 0):
            raise ValueError("jump sites must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValueError("transform values must be finite")
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("transform values must be nondecreasing")
        object.__setattr__(self, "jump_sites", sites)
        object.__setattr__(self, "values", vals)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_sites, t, side="right") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def shifted(self, c: float) -> "StepTransform":
        return StepTransform(self.jump_sites, self.values + c)


@dataclass(frozen=True)
class SiteLayout:
    """Distinct monitoring times of a sample and its informative range.

    ``site_of[i]`` is the index of observation ``i``'s time among ``sites``.
    Sites before the first one carrying an indicator 1, and after the last
    one carrying an indicator 0, contribute nothing once the transform is
    profiled out; ``first`` and ``last`` bound the informative sites.
    """

    sites: np.ndarray
    site_of: np.ndarray
    first: int
    last: int

    @classmethod
    def from_data(cls, v, delta) -> "SiteLayout":
        v = np.asarray(v, dtype=float)
        delta = np.asarray(delta)
        sites, site_of = np.unique(v, return_inverse=True)
        ones = site_of[delta == 1]
        zeros = site_of[delta == 0]
        if ones.size == 0 or zeros.size == 0 or ones.min() > zeros.max():
            raise ProvisionError(
                "uninformative data: no observation with delta=1 precedes one with "
                "delta=0 in monitoring-time order, so the transformation is not identified"
            )
        return cls(sites, site_of, int(ones.min()), int(zeros.max()))

    @property
    def n_sites(self) -> int:
        return self.sites.size

    @property
    def active(self) -> np.ndarray:
        """Mask of observations at informative sites."""
        return (self.site_of >= self.first) & (self.site_of <= self.last)

    def extend(self, active_values) -> np.ndarray:
        """Values on all sites, constant outside the informative range."""
        full = np.empty(self.n_sites)
        full[self.first : self.last + 1] = active_values
        full[: self.first] = active_values[0]
        full[self.last + 1 :] = active_values[-1]
        return full


class FenchelResiduals(NamedTuple):
    max_ineq: float
    eq_resid: float
    total: float

    def within(self, tol: float) -> bool:
        return self.max_ineq <= tol and self.eq_resid <= tol and self.total <= tol


def _fenchel_from_scores(s, H) -> FenchelResiduals:
    upper = np.cumsum(s[::-1])[::-1]
    return FenchelResiduals(float(upper.max()), abs(float(s @ H)), abs(float(upper[0])))


class ICMInfo(NamedTuple):
    iterations: int
    converged: bool
    loglik: float
    fenchel: FenchelResiduals
    trace: list


def _icm_core(site, delta, offsets, n, H, family, tol, max_iter):
    """ICM on informative observations; ``H`` holds one value per informative site."""
    B = H.size
    H = H.copy()
    qv = q_eval(family, delta, offsets + H[site])
    ll = qv.q.sum() / n
    trace = [ll]
    converged = False
    it = 0
    res = None
    for it in range(max_iter + 1):
        s = np.bincount(site, weights=qv.q1, minlength=B) / n
        res = _fenchel_from_scores(s, H)
        if res.within(tol):
            converged = True
            break
        if it == max_iter:
            break
        curv = -qv.q2
        bad = curv < -1e-8 * (qv.q1 * qv.q1 + 1e-300)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ConvexityError(
                f"log-likelihood kernel not concave at observation {i} "
                f"(delta={int(delta[i])}, linear predictor {offsets[i] + H[site[i]]:.6g}); "
                f"the link violates the strict concavity condition there"
            )
        m = np.bincount(site, weights=np.maximum(curv, 0.0), minlength=B) / n
        m = np.maximum(m, WEIGHT_FLOOR * max(m.max(), 1e-300))
        cand = pava(H + s / m, m)
        step = cand - H
        if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(np.abs(H))):
            break
        alpha = 1.0
        accepted = False
        for _ in range(LINE_SEARCH_HALVINGS + 1):
            Hn = H + alpha * step
            qn = q_eval(family, delta, offsets + Hn[site])
            lln = qn.q.sum() / n
            if lln >= ll:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        H, qv, ll = Hn, qn, lln
        trace.append(ll)
    return H, ICMInfo(it, converged, ll, res, trace)


def initial_transform(layout: SiteLayout, delta, family: LinkFamily) -> np.ndarray:
    """Starting values on all sites: ``F^{-1}`` of the clamped isotonic fit of delta."""
    delta = np.asarray(delta, dtype=float)
    n = delta.size
    counts = np.bincount(layout.site_of, minlength=layout.n_sites).astype(float)
    means = np.bincount(layout.site_of, weights=delta, minlength=layout.n_sites) / counts
    p = np.clip(pava(means, counts), 1.0 / (n + 1), n / (n + 1.0))
    return family.ppf(p)


def icm_h_step(
    data,
    offsets,
    H: StepTransform | None,
    family: LinkFamily,
    tol: float = 1e-6,
    max_iter: int = 500,
    full_output: bool = False,
):
    """Maximize the log-likelihood over nondecreasing step transformations.

    Parameters
    ----------
    data : Dataset
        Observations (any order).
    offsets : array_like, shape (n,)
        Fixed part of the linear predictor, ``beta'z_i + h(w_i)``.
    H : StepTransform or None
        Starting transform; evaluated at the observed times.  ``None`` uses
        :func:`initial_transform`.
    family : LinkFamily
    tol : float
        Target for the Fenchel residuals.
    max_iter : int
    full_output : bool
        Also return an :class:`ICMInfo`.

    Returns
    -------
    StepTransform
        Jumps at the distinct observed times; constant outside the informative
        range.
    """
    offsets = np.asarray(offsets, dtype=float)
    layout = SiteLayout.from_data(data.v, data.delta)
    if H is None:
        H0 = initial_transform(layout, data.delta, family)
    else:
        H0 = H(layout.sites)
    act = layout.active
    site = layout.site_of[act] - layout.first
    Ha, info = _icm_core(
        site,
        data.delta[act],
        offsets[act],
        data.n,
        np.maximum.accumulate(H0[layout.first : layout.last + 1]),
        family,
        tol,
        max_iter,
    )
    out = StepTransform(layout.sites, layout.extend(Ha))
    return (out, info) if full_output else out


def fenchel_residuals(data, offsets, H: StepTransform, family: LinkFamily) -> FenchelResiduals:
    """Stationarity residuals of the monotone MLE at ``H``.

    ``max_ineq`` is the largest upper partial sum of site scores
    ``sum_{j >= i} q1(delta_j, theta_j) / n`` (nonpositive at the optimum),
    ``eq_resid`` is ``|sum_i q1(delta_i, theta_i) H(v_i) / n|`` and ``total``
    is the absolute total score.  Only informative observations enter.
    """
    offsets = np.asarray(offsets, dtype=float)
    layout = SiteLayout.from_data(data.v, data.delta)
    act = layout.active
    site = layout.site_of[act] - layout.first
    Hs = H(layout.sites)[layout.first : layout.last + 1]
    q1 = q_eval(family, data.delta[act], offsets[act] + Hs[site]).q1
    s = np.bincount(site, weights=q1, minlength=Hs.size) / data.n
    return _fenchel_from_scores(s, Hs)


def truncate_transform(H: StepTransform, v, delta) -> StepTransform:
    """Clamp ``H`` to its values at the first event site and the last non-event site.

    Returns the zero transform when no indicator 1 precedes an indicator 0.
    """
    v = np.asarray(v, dtype=float)
    delta = np.asarray(delta)
    order = np.argsort(v, kind="stable")
    ds = delta[order]
    ones = np.flatnonzero(ds == 1)
    zeros = np.flatnonzero(ds == 0)
    if ones.size == 0 or zeros.size == 0 or ones[0] > zeros[-1]:
        return StepTransform(H.jump_sites, np.zeros_like(H.values))
    lo = H(v[order][ones[0]])
    hi = H(v[order][zeros[-1]])
    return StepTransform(H.jump_sites, np.clip(H.values, lo, hi))
