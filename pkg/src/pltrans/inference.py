"""Block-jackknife confidence ellipsoids for the regression parameter.

A random subsample of ``N = m * floor(n / m)`` records is split into ``m``
interleaved blocks, the model is refitted with each block left out, and the
spread of the ``m`` leave-block-out estimates gives a covariance estimate.
The studentized quadratic form is referred to a scaled F law, which is the
one-sample Hotelling distribution for ``m`` Gaussian block means.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .families import LinkFamily
from .fit import FitConfig, FitResult, fit

__all__ = [
    "JackknifeError",
    "JackknifeResult",
    "Ellipsoid",
    "block_indices",
    "jackknife_covariance",
    "block_jackknife",
    "confidence_region",
    "critical_value",
    "marginal_intervals",
    "f_quantile",
    "gaussian_shortcut_statistics",
]


class JackknifeError(ValueError):
    """The jackknife cannot be formed or its covariance is singular."""


def f_quantile(d1: int, d2: int, p: float) -> float:
    """Quantile of the F distribution with ``(d1, d2)`` degrees of freedom.

    Inverts the regularized incomplete beta function: if ``x`` solves
    ``I_x(d1/2, d2/2) = p`` then the quantile is ``d2 x / (d1 (1 - x))``.
    """
    if int(d1) != d1 or int(d2) != d2 or d1 < 1 or d2 < 1:
        raise ValueError("degrees of freedom must be positive integers")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    x = special.betaincinv(0.5 * d1, 0.5 * d2, p)
    return float(d2 * x / (d1 * (1.0 - x)))


def critical_value(d: int, m: int, level: float) -> float:
    """``d (m - 1) / (m - d)`` times the ``level`` quantile of ``F(d, m - d)``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if m <= d:
        raise JackknifeError(f"need more blocks than parameters (m={m}, d={d})")
    return d * (m - 1) / (m - d) * f_quantile(d, m - d, level)


def block_indices(n: int, m: int, rng: np.random.Generator):
    """Subsample and the kept records of each block refit.

    ``N = m * floor(n / m)`` records are drawn without replacement; refit
    ``j`` omits subsample positions ``j, m + j, 2m + j, ...``.

    Returns
    -------
    sub : ndarray, shape (N,)
        Indices into the full sample, in draw order.
    keep : list of ndarray
        Sorted indices into the full sample for each of the ``m`` refits.
    """
    k = n // m
    if k < 2:
        raise JackknifeError(f"need n >= 2 m (n={n}, m={m})")
    sub = rng.permutation(n)[: m * k]
    pos = np.arange(m * k)
    return sub, [np.sort(sub[pos % m != j]) for j in range(m)]


def jackknife_covariance(betas, k: int, center=None) -> np.ndarray:
    """``(m - 1) k sum_j (b_j - c)(b_j - c)'`` with ``c`` the mean unless given."""
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    m = betas.shape[0]
    c = betas.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    dev = betas - c
    S = (m - 1) * k * (dev.T @ dev)
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class Ellipsoid:
    """``{b : n (center - b)' inv(shape) (center - b) <= radius2}``."""

    center: np.ndarray
    shape: np.ndarray
    radius2: float
    n: int

    def statistic(self, beta) -> float:
        diff = self.center - np.asarray(beta, dtype=float)
        return float(self.n * diff @ np.linalg.solve(self.shape, diff))

    def contains(self, beta) -> bool:
        return self.statistic(beta) <= self.radius2


@dataclass(frozen=True)
class JackknifeResult:
    """Leave-block-out estimates and the resulting covariance estimate.

    ``S_star`` is centered at ``beta_bar`` (``variant="S*"``) or at the fit
    on the whole subsample (``variant="S**"``).  ``statistic`` is filled in
    only when a hypothesized value was supplied.
    """

    m: int
    k: int
    n: int
    betas: np.ndarray
    beta_bar: np.ndarray
    beta_hat: np.ndarray
    S_star: np.ndarray
    variant: str
    level: float
    critical: float
    converged: np.ndarray
    statistic: float | None = None
    covered_truth: bool | None = None
    block_objectives: np.ndarray = field(default=None, repr=False)

    @property
    def reliable(self) -> bool:
        return bool(np.all(self.converged))


def block_jackknife(
    data: Dataset,
    family: LinkFamily,
    config: FitConfig | None = None,
    m: int = 10,
    seed: int = 0,
    *,
    beta0=None,
    level: float = 0.95,
    variant: str = "S*",
    full_fit: FitResult | None = None,
    knot_seed: int = 0,
) -> JackknifeResult:
    """Leave-one-block-out refits and the jackknife covariance ``S*``.

    Parameters
    ----------
    data : Dataset
    family : LinkFamily
    config : FitConfig, optional
    m : int
        Number of blocks; must exceed the dimension of ``beta``.
    seed : int
        Drives the subsample drawn without replacement.
    beta0 : array_like, optional
        Hypothesized value; when given the Wald-type statistic and its
        coverage indicator are returned.
    level : float
        Confidence level of the critical value.
    variant : {"S*", "S**"}
        Center the covariance at the mean of the block estimates, or at the
        estimate from the whole subsample.
    full_fit : FitResult, optional
        Fit on ``data``.  It supplies the center of the region, the warm
        start and the spline basis of the refits; computed if omitted.
    knot_seed : int
        Knot placement seed used when ``full_fit`` is computed here.

    Raises
    ------
    JackknifeError
        If ``m <= d``, ``n < 2 m`` or the covariance estimate is singular.
    """
    config = config or FitConfig()
    if variant not in ("S*", "S**"):
        raise ValueError("variant must be 'S*' or 'S**'")
    d, n = data.d, data.n
    if d < 1:
        raise JackknifeError("no linear covariates to make inference on")
    if m <= d:
        raise JackknifeError(f"need more blocks than parameters (m={m}, d={d})")
    crit = critical_value(d, m, level)
    if full_fit is None:
        full_fit = fit(data, family, config, knot_seed)
    basis = full_fit.params.h.basis
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6A6B]))
    sub, keep = block_indices(n, m, rng)
    k = n // m

    betas = np.empty((m, d))
    ok = np.empty(m, dtype=bool)
    objs = np.empty(m)
    for j, idx in enumerate(keep):
        res = fit(data.subset(idx), family, config, basis=basis, init=full_fit.params)
        betas[j] = res.beta
        ok[j] = res.converged
        objs[j] = res.objective

    beta_bar = betas.mean(axis=0)
    if variant == "S*":
        center = beta_bar
    elif m * k == n:
        center = full_fit.beta
    else:
        center = fit(data.subset(np.sort(sub)), family, config, basis=basis, init=full_fit.params).beta
    S = jackknife_covariance(betas, k, center)
    eig = np.linalg.eigvalsh(S)
    if eig.min() <= 1e-12 * max(eig.max(), 1e-300):
        raise JackknifeError("jackknife covariance is singular; use more blocks (larger m)")

    stat = covered = None
    if beta0 is not None:
        beta0 = np.asarray(beta0, dtype=float)
        diff = full_fit.beta - beta0
        stat = float(n * diff @ np.linalg.solve(S, diff))
        covered = stat <= crit
    return JackknifeResult(
        m=m,
        k=k,
        n=n,
        betas=betas,
        beta_bar=beta_bar,
        beta_hat=full_fit.beta.copy(),
        S_star=S,
        variant=variant,
        level=level,
        critical=crit,
        converged=ok,
        statistic=stat,
        covered_truth=covered,
        block_objectives=objs,
    )


def confidence_region(result: JackknifeResult, beta_hat=None, level: float | None = None) -> Ellipsoid:
    """Confidence ellipsoid centered at ``beta_hat`` (the full-sample fit by default)."""
    level = result.level if level is None else level
    center = result.beta_hat if beta_hat is None else np.asarray(beta_hat, dtype=float)
    d = center.size
    return Ellipsoid(center, result.S_star, critical_value(d, result.m, level), result.n)


def marginal_intervals(result: JackknifeResult, beta_hat=None, level: float | None = None) -> np.ndarray:
    """Per-coordinate intervals, the one-dimensional version of the region.

    Coordinate ``i`` uses ``S_star[i, i]`` and the critical value for
    ``d = 1``, i.e. ``t_{m-1}`` quantiles.  Returns shape ``(d, 2)``.
    """
    level = result.level if level is None else level
    center = result.beta_hat if beta_hat is None else np.asarray(beta_hat, dtype=float)
    half = np.sqrt(critical_value(1, result.m, level) * np.diag(result.S_star) / result.n)
    return np.column_stack([center - half, center + half])


def gaussian_shortcut_statistics(d: int, m: int, draws: int, seed: int = 0, cov=None) -> np.ndarray:
    """Jackknife statistics with the refits replaced by Gaussian block means.

    Each draw takes ``m`` independent ``N(0, cov)`` block means ``x_j`` and
    one record per block (``k = 1``, ``n = m``), so the full-sample estimate
    is their mean and refit ``j`` is the mean of the other ``m - 1``.  The
    statistic is then computed exactly as for real refits.
    """
    if m <= d:
        raise JackknifeError(f"need more blocks than parameters (m={m}, d={d})")
    rng = np.random.default_rng(seed)
    cov = np.eye(d) if cov is None else np.asarray(cov, dtype=float)
    L = np.linalg.cholesky(cov)
    x = rng.standard_normal((draws, m, d)) @ L.T
    total = x.sum(axis=1, keepdims=True)
    full = total[:, 0, :] / m
    loo = (total - x) / (m - 1)
    out = np.empty(draws)
    for r in range(draws):
        S = jackknife_covariance(loo[r], 1)
        out[r] = m * full[r] @ np.linalg.solve(S, full[r])
    return out
