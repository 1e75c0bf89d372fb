"""Cubic B-spline sieve for the smooth covariate effect.

Knots are placed by one-dimensional K-means on the observed covariate, the
number of interior knots grows like ``n ** (1/5)``, and the roughness penalty
is the integrated squared second derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import BSpline

__all__ = [
    "SplineBasis",
    "SmoothEffect",
    "select_knots",
    "basis_count",
    "make_basis",
    "penalty_matrix",
]

KNOT_SHRINK = 1e-3


class KnotError(ValueError):
    """Knot configuration cannot be satisfied by the data."""


def basis_count(n: int, multiplier: float = 2.0) -> int:
    """Number of interior knots, ``max(4, ceil(multiplier * n ** 0.2))``."""
    if n < 10:
        raise ValueError("basis_count needs n >= 10")
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    return max(4, math.ceil(multiplier * n**0.2))


def _lloyd_1d(x, centers, rng, max_iter=100):
    centers = np.array(centers, dtype=float)
    for _ in range(max_iter):
        centers.sort()
        cuts = 0.5 * (centers[1:] + centers[:-1])
        label = np.searchsorted(cuts, x, side="left")
        counts = np.bincount(label, minlength=centers.size)
        sums = np.bincount(label, weights=x, minlength=centers.size)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled]
        for j in np.flatnonzero(~filled):
            # empty cluster: reseed on a random member of the largest cluster
            big = np.flatnonzero(label == np.argmax(counts))
            new[j] = x[rng.choice(big)]
        if np.array_equal(new, centers):
            break
        centers = new
    return np.sort(centers)


def select_knots(w, n_interior: int, seed: int = 0) -> np.ndarray:
    """Interior knots from a 1-D K-means run on the covariate values.

    Centers start at the ``j / (K + 1)`` sample quantiles and are refined by
    Lloyd iterations until they stop moving (at most 100 rounds).  The final
    centers are shrunk strictly inside ``(min w, max w)``.
    """
    w = np.sort(np.asarray(w, dtype=float))
    if n_interior < 1:
        raise KnotError("need at least one interior knot")
    distinct = np.unique(w)
    if distinct.size < n_interior:
        raise KnotError(
            f"{n_interior} clusters requested but only {distinct.size} distinct covariate values"
        )
    rng = np.random.default_rng(seed)
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    init = np.quantile(w, probs)
    if np.unique(init).size < n_interior:
        init = np.quantile(distinct, probs)
    centers = _lloyd_1d(w, init, rng)
    a, b = w[0], w[-1]
    eps = KNOT_SHRINK * (b - a)
    knots = np.clip(centers, a + eps, b - eps)
    if np.any(np.diff(knots) <= 0):
        raise KnotError("K-means produced coincident knots; lower the knot count")
    return knots


@dataclass(frozen=True)
class SplineBasis:
    """Cubic B-spline basis on ``[a, b]`` with the given interior knots."""

    interior_knots: np.ndarray
    boundary: tuple[float, float]
    order: int = 4

    def __post_init__(self):
        knots = np.asarray(self.interior_knots, dtype=float)
        a, b = map(float, self.boundary)
        if not a < b:
            raise KnotError("boundary must satisfy a < b")
        if knots.size and (np.any(np.diff(knots) <= 0) or knots[0] <= a or knots[-1] >= b):
            raise KnotError("interior knots must be strictly increasing inside (a, b)")
        object.__setattr__(self, "interior_knots", knots)
        object.__setattr__(self, "boundary", (a, b))

    @property
    def degree(self) -> int:
        return self.order - 1

    @property
    def K(self) -> int:
        return self.interior_knots.size + self.order

    @property
    def knots(self) -> np.ndarray:
        a, b = self.boundary
        k = self.order
        return np.concatenate([np.full(k, a), self.interior_knots, np.full(k, b)])

    def _spline(self, nu=0):
        s = BSpline(self.knots, np.eye(self.K), self.degree, extrapolate=False)
        return s.derivative(nu) if nu else s

    def design(self, w, nu: int = 0) -> np.ndarray:
        """Basis values (or ``nu``-th derivatives) at ``w``, shape ``(len(w), K)``.

        Points outside ``[a, b]`` are clamped to the boundary.
        """
        w = np.clip(np.atleast_1d(np.asarray(w, dtype=float)), *self.boundary)
        if nu == 0:
            return BSpline.design_matrix(w, self.knots, self.degree).toarray()
        return self._spline(nu)(w)

    def greville(self) -> np.ndarray:
        t = self.knots
        p = self.degree
        return np.array([t[j + 1 : j + 1 + p].mean() for j in range(self.K)])


def make_basis(w, n_interior: int | None = None, multiplier: float = 2.0, seed: int = 0):
    """Basis with K-means knots; the knot count defaults to ``basis_count(len(w))``."""
    w = np.asarray(w, dtype=float)
    if n_interior is None:
        n_interior = basis_count(w.size, multiplier)
    knots = select_knots(w, n_interior, seed)
    return SplineBasis(knots, (float(w.min()), float(w.max())))


def penalty_matrix(basis: SplineBasis) -> np.ndarray:
    """``Omega[j, k] = integral of B_j''(w) B_k''(w) dw`` over ``[a, b]``.

    Second derivatives of a cubic basis are linear on each knot interval, so a
    two-point Gauss-Legendre rule per interval is exact.
    """
    breaks = np.unique(basis.knots)
    nodes, weights = np.polynomial.legendre.leggauss(2)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wt = (half[:, None] * weights[None, :]).ravel()
    d2 = basis.design(x, nu=2)
    omega = d2.T @ (wt[:, None] * d2)
    return 0.5 * (omega + omega.T)


@dataclass(frozen=True)
class SmoothEffect:
    """Spline representation ``h(w) = B(w) @ coeffs - center_offset``."""

    basis: SplineBasis
    coeffs: np.ndarray
    center_offset: float = 0.0
    _omega: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __call__(self, w):
        return self.basis.design(w) @ self.coeffs - self.center_offset

    def centered(self, w_sample) -> "SmoothEffect":
        """Same curve shifted so its empirical mean over ``w_sample`` is zero."""
        offset = float(np.mean(self.basis.design(w_sample) @ self.coeffs))
        return replace(self, center_offset=offset)

    def roughness(self) -> float:
        """``J^2(h)``, the integrated squared second derivative."""
        omega = self._omega if self._omega is not None else penalty_matrix(self.basis)
        return float(self.coeffs @ omega @ self.coeffs)
