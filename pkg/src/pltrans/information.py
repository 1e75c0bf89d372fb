"""Efficient score and information for the regression parameter.

Everything is computed by quadrature on a product grid for independent
``V``, ``W`` and ``Z``.  With ``Q^2`` averaged over ``delta`` given the
covariates, the weight is ``f^2 / (F (1 - F))`` at ``theta = beta'z + h(w)
+ H(v)``.  ``Pi1`` and ``Pi2`` are the ``Q^2``-weighted conditional means
given ``V`` and given ``W``; the least favorable direction for the smooth
effect is the Neumann series ``sum_j (Pi2 Pi1)^j Pi2 (1 - Pi1) D*`` with
``D* = E[Z Q^2 | v, w] / E[Q^2 | v, w]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .families import LinkFamily

__all__ = [
    "DesignSpec",
    "EfficientScorePieces",
    "InformationError",
    "HstarResult",
    "sec9_spec",
    "q_weight_sq",
    "weight_grid",
    "project_pi1",
    "project_pi2",
    "dstar",
    "hstar_series",
    "efficient_information",
    "Q2_CAP",
]

Q2_CAP = 1e12


class InformationError(ArithmeticError):
    """Degenerate projections, a diverging series or a singular information."""


def _normalized(w):
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("quadrature weights must be nonnegative with positive total")
    return w / w.sum()


def _grid_weights(grid, density):
    """Composite Simpson weights times the density on a uniform grid.

    Falls back to the trapezoid rule when the number of points is even.
    """
    grid = np.asarray(grid, dtype=float)
    n = grid.size
    if n >= 3 and n % 2 == 1:
        tw = np.ones(n)
        tw[1:-1:2] = 4.0
        tw[2:-1:2] = 2.0
    else:
        tw = np.full(n, 2.0)
        tw[[0, -1]] = 1.0
    return _normalized(tw * density(grid))


@dataclass(frozen=True)
class DesignSpec:
    """Discretized law of independent ``(V, W, Z)`` and the true parameters.

    Attributes
    ----------
    v, pv : ndarray
        Grid and probability weights for ``V``.
    w, pw : ndarray
        Grid and probability weights for ``W``.
    z, pz : ndarray, shapes (nz, d) and (nz,)
        Atoms and probabilities of ``Z``.
    beta0 : ndarray, shape (d,)
    h0, H0 : callable
        True smooth effect and transformation.
    family : LinkFamily
    """

    v: np.ndarray
    pv: np.ndarray
    w: np.ndarray
    pw: np.ndarray
    z: np.ndarray
    pz: np.ndarray
    beta0: np.ndarray
    h0: Callable
    H0: Callable
    family: LinkFamily

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        object.__setattr__(self, "z", z)
        for name in ("v", "w", "beta0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("pv", "pw", "pz"):
            object.__setattr__(self, name, _normalized(getattr(self, name)))
        if self.pv.shape != self.v.shape or self.pw.shape != self.w.shape:
            raise ValueError("grid and weight shapes differ")
        if self.pz.shape != (z.shape[0],) or self.beta0.shape != (z.shape[1],):
            raise ValueError("Z atoms, weights and beta0 are inconsistent")

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def theta(self, iz: int) -> np.ndarray:
        """Linear predictor on the ``(v, w)`` grid at Z atom ``iz``."""
        base = self.H0(self.v)[:, None] + self.h0(self.w)[None, :]
        return base + float(self.z[iz] @ self.beta0)

    def scaled_z(self, factor) -> "DesignSpec":
        """Same design with ``Z`` multiplied coordinatewise and ``beta0`` divided."""
        factor = np.broadcast_to(np.asarray(factor, dtype=float), (self.d,))
        return DesignSpec(
            self.v, self.pv, self.w, self.pw, self.z * factor, self.pz,
            self.beta0 / factor, self.h0, self.H0, self.family,
        )


def sec9_spec(n_grid: int = 201, k0: float = 0.06516, beta0=(0.3, 0.25)) -> DesignSpec:
    """Simulation design: ``V`` exponential on ``[0.2, 1.8]``, ``W ~ U[1, 10]``,
    ``Z1 ~ U[0.5, 1.5]``, ``Z2 ~ Bernoulli(1/2)``, extreme value link and
    ``H0 = log A`` on the time scale."""
    v = np.linspace(0.2, 1.8, n_grid)
    w = np.linspace(1.0, 10.0, n_grid)
    z1 = np.linspace(0.5, 1.5, n_grid)
    pv = _grid_weights(v, lambda t: np.exp(-t))
    pw = _grid_weights(w, np.ones_like)
    p1 = _grid_weights(z1, np.ones_like)
    z = np.array([(a, b) for b in (0.0, 1.0) for a in z1])
    pz = np.concatenate([0.5 * p1, 0.5 * p1])
    return DesignSpec(
        v, pv, w, pw, z, pz, np.asarray(beta0, dtype=float),
        h0=lambda x: np.sin(np.asarray(x) / 1.2 - 1.0) - k0,
        H0=lambda t: k0 + np.log(np.expm1(np.asarray(t) / 3.0)),
        family=LinkFamily("extreme_value"),
    )


def _q2_of_theta(family: LinkFamily, theta) -> np.ndarray:
    log_val = 2.0 * family.logpdf(theta) - family.logcdf(theta) - family.logsf(theta)
    return np.minimum(np.exp(np.minimum(log_val, math.log(Q2_CAP))), Q2_CAP)


def q_weight_sq(spec: DesignSpec, v, w, z) -> np.ndarray:
    """``E[Q^2 | v, w, z] = f^2 / (F (1 - F))`` at ``theta = beta0'z + h0(w) + H0(v)``; capped at 1e12."""
    z = np.asarray(z, dtype=float)
    theta = spec.H0(np.asarray(v, dtype=float)) + spec.h0(np.asarray(w, dtype=float)) + z @ spec.beta0
    return _q2_of_theta(spec.family, theta)


@dataclass(frozen=True)
class _Weights:
    D0: np.ndarray
    D1: np.ndarray


def weight_grid(spec: DesignSpec) -> _Weights:
    """``D0 = E[Q^2 | v, w]`` and ``D1 = E[Z Q^2 | v, w]`` on the grid."""
    nv, nw = spec.v.size, spec.w.size
    D0 = np.zeros((nv, nw))
    D1 = np.zeros((nv, nw, spec.d))
    for iz in range(spec.z.shape[0]):
        q2 = spec.pz[iz] * _q2_of_theta(spec.family, spec.theta(iz))
        D0 += q2
        D1 += q2[:, :, None] * spec.z[iz]
    if not np.all(D0 > 0):
        raise InformationError("zero conditional weight on the grid")
    return _Weights(D0, D1)


def _as_vw(g, spec):
    g = np.asarray(g, dtype=float)
    nv, nw = spec.v.size, spec.w.size
    if g.shape[:2] == (nv, nw):
        return g
    raise ValueError(f"expected values on the ({nv}, {nw}) grid, got shape {g.shape}")


def project_pi1(spec: DesignSpec, g, weights: _Weights | None = None) -> np.ndarray:
    """``E[g(V, W) Q^2 | V = v] / E[Q^2 | V = v]`` on the V grid.

    ``g`` holds values on the ``(v, w)`` grid, optionally with trailing
    dimensions that are projected separately.
    """
    weights = weights or weight_grid(spec)
    g = _as_vw(g, spec)
    k = weights.D0 * spec.pw[None, :]
    den = k.sum(axis=1)
    if not np.all(den > 0):
        raise InformationError("zero denominator in the projection onto functions of V")
    num = np.einsum("ij,ij...->i...", k, g)
    return num / den.reshape((-1,) + (1,) * (g.ndim - 2))


def project_pi2(spec: DesignSpec, g, weights: _Weights | None = None) -> np.ndarray:
    """``E[g(V, W) Q^2 | W = w] / E[Q^2 | W = w]`` on the W grid."""
    weights = weights or weight_grid(spec)
    g = _as_vw(g, spec)
    k = weights.D0 * spec.pv[:, None]
    den = k.sum(axis=0)
    if not np.all(den > 0):
        raise InformationError("zero denominator in the projection onto functions of W")
    num = np.einsum("ij,ij...->j...", k, g)
    return num / den.reshape((-1,) + (1,) * (g.ndim - 2))


def dstar(spec: DesignSpec, weights: _Weights | None = None) -> np.ndarray:
    """``D* = D1 / D0`` on the grid, shape ``(nv, nw, d)``."""
    weights = weights or weight_grid(spec)
    return weights.D1 / weights.D0[:, :, None]


def _lift_v(a, spec):
    return np.broadcast_to(a[:, None, ...], (spec.v.size, spec.w.size) + a.shape[1:])


def _lift_w(b, spec):
    return np.broadcast_to(b[None, :, ...], (spec.v.size, spec.w.size) + b.shape[1:])


@dataclass(frozen=True)
class HstarResult:
    """``h_tilde`` on the W grid (shape ``(nw, d)``) and series diagnostics."""

    w: np.ndarray
    values: np.ndarray
    terms: int
    last_increment: float
    increments: np.ndarray

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return np.stack([np.interp(w, self.w, self.values[:, k]) for k in range(self.values.shape[1])], -1)


def hstar_series(spec: DesignSpec, tol: float = 1e-8, max_terms: int = 200, weights=None) -> HstarResult:
    """Least favorable smooth-effect direction by the alternating projection series.

    Terms ``(Pi2 Pi1)^j Pi2 (1 - Pi1) D*`` are added until the sup norm of
    the newest one is at most ``tol`` or ``max_terms`` terms were used.  The
    sum is centered to have mean zero under the law of ``W``.

    Raises
    ------
    InformationError
        If the increment grows for three consecutive terms.
    """
    weights = weights or weight_grid(spec)
    D = dstar(spec, weights)
    resid = D - _lift_v(project_pi1(spec, D, weights), spec)
    term = project_pi2(spec, resid, weights)
    total = term.copy()
    incs = [float(np.max(np.abs(term)))]
    grow = 0
    j = 1
    while incs[-1] > tol and j < max_terms:
        term = project_pi2(spec, _lift_v(project_pi1(spec, _lift_w(term, spec), weights), spec), weights)
        total += term
        incs.append(float(np.max(np.abs(term))))
        grow = grow + 1 if incs[-1] > incs[-2] else 0
        if grow >= 3:
            raise InformationError("alternating projection series is not contracting")
        j += 1
    total = total - spec.pw @ total
    return HstarResult(spec.w, total, j, incs[-1], np.array(incs))


@dataclass(frozen=True)
class EfficientScorePieces:
    """``h_tilde`` on the W grid, ``q_tilde`` on the V grid and the information ``I0``."""

    v: np.ndarray
    w: np.ndarray
    h_tilde: np.ndarray
    q_tilde: np.ndarray
    I0: np.ndarray

    @property
    def I0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.I0)


def efficient_information(spec: DesignSpec, h_tilde: HstarResult | np.ndarray | None = None, weights=None):
    """Assemble ``q_tilde`` and ``I0 = E[(Z - h_tilde - q_tilde)^{(x)2} Q^2]``.

    ``q_tilde(v) = Pi1 D*(v) - Pi1 h_tilde(v)``.

    Raises
    ------
    InformationError
        If ``I0`` is not positive definite.
    """
    weights = weights or weight_grid(spec)
    if h_tilde is None:
        h_tilde = hstar_series(spec, weights=weights)
    ht = h_tilde.values if isinstance(h_tilde, HstarResult) else np.asarray(h_tilde, dtype=float)
    if ht.ndim == 1:
        ht = ht[:, None]
    D = dstar(spec, weights)
    qt = project_pi1(spec, D, weights) - project_pi1(spec, _lift_w(ht, spec), weights)
    r = qt[:, None, :] + ht[None, :, :]
    pvw = spec.pv[:, None] * spec.pw[None, :]
    d = spec.d
    I0 = np.zeros((d, d))
    for iz in range(spec.z.shape[0]):
        q2 = spec.pz[iz] * pvw * _q2_of_theta(spec.family, spec.theta(iz))
        diff = spec.z[iz] - r
        I0 += np.einsum("ij,ijk,ijl->kl", q2, diff, diff)
    I0 = 0.5 * (I0 + I0.T)
    if np.linalg.eigvalsh(I0).min() <= 0:
        raise InformationError("efficient information is not positive definite")
    return EfficientScorePieces(spec.v, spec.w, ht, qt, I0)
