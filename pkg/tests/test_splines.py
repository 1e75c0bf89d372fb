import numpy as np
import pytest
from scipy import integrate
from scipy.interpolate import BSpline

from pltrans.splines import (
    KnotError,
    SmoothEffect,
    SplineBasis,
    basis_count,
    make_basis,
    penalty_matrix,
    select_knots,
)


def _lloyd_oracle(x, k, iters=1000):
    # plain assignment/update loop on the full distance matrix
    x = np.sort(np.asarray(x, dtype=float))
    c = np.quantile(x, np.arange(1, k + 1) / (k + 1))
    for _ in range(iters):
        lab = np.argmin(np.abs(x[:, None] - c[None, :]), axis=1)
        new = np.array([x[lab == j].mean() for j in range(k)])
        if np.allclose(new, c, rtol=0, atol=0):
            break
        c = new
    return np.sort(c)


def test_basis_count_examples():
    assert basis_count(400, 2) == 7
    assert basis_count(1600, 2) == 9
    assert basis_count(10, 0.1) == 4
    with pytest.raises(ValueError):
        basis_count(9)


def test_knots_two_point_masses():
    k = select_knots([1, 1, 1, 9, 9, 9], 2)
    assert k[0] > 1 and k[1] < 9
    assert k == pytest.approx([1.008, 8.992], abs=1e-12)


def test_knots_single_cluster():
    assert select_knots(np.arange(1.0, 11.0), 1) == pytest.approx([5.5])


def test_knots_match_lloyd_oracle(rng):
    w = rng.uniform(1, 10, 200)
    assert np.allclose(select_knots(w, 5), _lloyd_oracle(w, 5), rtol=0, atol=1e-12)


def test_knots_deterministic_and_errors(rng):
    w = rng.uniform(size=50)
    assert np.array_equal(select_knots(w, 6, seed=3), select_knots(w, 6, seed=3))
    with pytest.raises(KnotError):
        select_knots([1.0, 1.0, 2.0], 3)


@pytest.fixture
def basis():
    return SplineBasis(np.array([2.0, 3.5, 5.0, 8.0]), (1.0, 10.0))


def test_partition_of_unity(basis, rng):
    w = np.concatenate([rng.uniform(1, 10, 500), [1.0, 10.0, 2.0, 3.5]])
    B = basis.design(w)
    assert B.shape == (w.size, basis.K) and basis.K == 8
    assert np.all(B >= 0)
    assert np.allclose(B.sum(axis=1), 1.0, atol=1e-12)


def test_clamping_outside(basis):
    assert np.allclose(basis.design([0.0, 11.0]), basis.design([1.0, 10.0]))


def test_design_matches_cox_de_boor(basis, rng):
    w = rng.uniform(1, 9.99, 50)
    for j in range(basis.K):
        ref = BSpline.basis_element(basis.knots[j : j + 5], extrapolate=False)(w)
        assert np.allclose(basis.design(w)[:, j], np.nan_to_num(ref), atol=1e-12)


def test_constant_and_linear_reproduction(basis, rng):
    w = rng.uniform(1, 10, 100)
    h = SmoothEffect(basis, np.full(basis.K, 2.5), center_offset=0.5)
    assert np.allclose(h(w), 2.0, atol=1e-12)
    lin = SmoothEffect(basis, basis.greville())
    assert np.allclose(lin(w), w, atol=1e-10)


def test_continuity_at_knots(basis):
    eps = 1e-13
    for k in basis.interior_knots:
        assert np.allclose(basis.design([k - eps]), basis.design([k + eps]), atol=1e-11)


def test_penalty_null_space(basis):
    omega = penalty_matrix(basis)
    assert np.allclose(omega, omega.T, atol=0)
    one = np.ones(basis.K)
    g = basis.greville()
    assert abs(one @ omega @ one) < 1e-10
    assert abs(g @ omega @ g) < 1e-10
    eig = np.linalg.eigvalsh(omega)
    assert np.sum(eig < 1e-10 * eig.max()) == 2


def test_penalty_of_square():
    # w^2 on [0, 1] has J^2 = 4; quadratics lie in the cubic spline space
    b = SplineBasis(np.array([0.3, 0.6]), (0.0, 1.0))
    grid = np.linspace(0, 1, 40)
    c, *_ = np.linalg.lstsq(b.design(grid), grid**2, rcond=None)
    assert np.allclose(b.design(grid) @ c, grid**2, atol=1e-12)
    assert c @ penalty_matrix(b) @ c == pytest.approx(4.0, abs=1e-8)


def test_penalty_against_adaptive_quadrature(basis, rng):
    omega = penalty_matrix(basis)
    for _ in range(3):
        c = rng.normal(size=basis.K)
        f = lambda x: float((basis.design([x], nu=2) @ c)[0] ** 2)
        pts = list(basis.interior_knots)
        ref, _ = integrate.quad(f, 1.0, 10.0, points=pts, limit=200, epsabs=1e-12, epsrel=1e-12)
        assert c @ omega @ c == pytest.approx(ref, rel=1e-6)


def test_centering(rng):
    w = rng.uniform(1, 10, 300)
    b = make_basis(w, 5)
    h = SmoothEffect(b, rng.normal(size=b.K)).centered(w)
    assert abs(np.mean(h(w))) < 1e-10
    raw = SmoothEffect(b, h.coeffs)
    x = np.array([2.0, 7.0])
    assert np.diff(h(x)) == pytest.approx(np.diff(raw(x)), abs=1e-12)


def test_roughness_uses_penalty(basis, rng):
    c = rng.normal(size=basis.K)
    assert SmoothEffect(basis, c).roughness() == pytest.approx(c @ penalty_matrix(basis) @ c, rel=1e-12)


def test_make_basis_default_count(rng):
    w = rng.uniform(1, 10, 400)
    b = make_basis(w)
    assert b.interior_knots.size == 7
    assert b.boundary == (w.min(), w.max())
    assert np.all(np.diff(b.interior_knots) > 0)


def test_invalid_basis():
    with pytest.raises(KnotError):
        SplineBasis(np.array([0.0, 0.5]), (0.0, 1.0))
    with pytest.raises(KnotError):
        SplineBasis(np.array([0.5]), (1.0, 1.0))
