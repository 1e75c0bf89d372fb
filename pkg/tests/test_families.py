import math

import numpy as np
import pytest
from scipy import integrate, stats

from pltrans.families import (
    DERIV_CAP,
    FamilyError,
    LinkFamily,
    check_b5d,
    link_eval,
    q_eval,
)

from conftest import B5D_FAMILIES

ALL_FAMILIES = B5D_FAMILIES + [LinkFamily("cauchy")]
GRID = np.linspace(-3.0, 3.0, 61)


def _ids(fams):
    return [str(f) for f in fams]


def test_logistic_at_zero():
    F, f, fdot = link_eval(LinkFamily("logit"), 0.0)
    assert F == pytest.approx(0.5, abs=1e-15)
    assert f == pytest.approx(0.25, abs=1e-15)
    assert fdot == pytest.approx(0.0, abs=1e-15)


def test_extreme_value_at_zero():
    F, _, _ = link_eval(LinkFamily("extreme_value"), 0.0)
    assert F == pytest.approx(1 - math.exp(-1), rel=1e-14)


def test_pareto_one_is_logistic():
    t = np.linspace(-8, 8, 401)
    a = np.array(link_eval(LinkFamily("pareto", 1.0), t))
    b = np.array(link_eval(LinkFamily("logistic"), t))
    assert np.max(np.abs(a - b)) < 1e-12
    assert np.allclose(link_eval(LinkFamily("pareto", 1.0), 1.3), link_eval(LinkFamily("logistic"), 1.3), rtol=0, atol=1e-15)


def test_closed_forms_against_scipy():
    t = np.linspace(-4, 4, 81)
    cases = [
        (LinkFamily("logit"), stats.logistic),
        (LinkFamily("probit"), stats.norm),
        (LinkFamily("cauchy"), stats.cauchy),
        (LinkFamily("cloglog"), stats.gumbel_l),
    ]
    for fam, ref in cases:
        assert np.allclose(fam.cdf(t), ref.cdf(t), rtol=1e-12, atol=1e-300)
        assert np.allclose(fam.pdf(t), ref.pdf(t), rtol=1e-12)


def test_gen_normal_cdf_by_quadrature():
    # independent route: integrate the density numerically
    for g in (1.5, 2.0, 3.0):
        fam = LinkFamily("gnorm", g)
        for t in (-2.5, -0.3, 0.0, 1.1, 3.0):
            val, _ = integrate.quad(fam.pdf, -np.inf, t, epsabs=1e-13, epsrel=1e-12)
            assert fam.cdf(t) == pytest.approx(val, rel=1e-9, abs=1e-13)


def test_gen_normal_two_is_rescaled_normal():
    fam = LinkFamily("gnorm", 2.0)
    t = np.linspace(-5, 5, 101)
    assert np.allclose(fam.cdf(t), stats.norm.cdf(t * math.sqrt(2)), rtol=1e-12)


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=_ids(ALL_FAMILIES))
def test_density_and_derivative_by_differences(fam):
    h = 1e-5
    F, f, fdot = link_eval(fam, GRID)
    dF = (fam.cdf(GRID + h) - fam.cdf(GRID - h)) / (2 * h)
    df = (fam.pdf(GRID + h) - fam.pdf(GRID - h)) / (2 * h)
    assert np.all((F > 0) & (F < 1)) and np.all(np.diff(F) > 0)
    assert np.all(f > 0)
    assert np.allclose(dF, f, rtol=1e-6)
    assert np.allclose(df, fdot, rtol=1e-6, atol=1e-9 * np.max(np.abs(fdot)))


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=_ids(ALL_FAMILIES))
@pytest.mark.parametrize("delta", [0, 1])
def test_q_derivatives_by_differences(fam, delta):
    h = 1e-5
    qv = q_eval(fam, np.full(GRID.size, delta), GRID)
    qp = q_eval(fam, np.full(GRID.size, delta), GRID + h)
    qm = q_eval(fam, np.full(GRID.size, delta), GRID - h)
    assert np.allclose((qp.q - qm.q) / (2 * h), qv.q1, rtol=1e-6, atol=1e-8)
    assert np.allclose((qp.q1 - qm.q1) / (2 * h), qv.q2, rtol=1e-6, atol=1e-8)


def test_q_direct_definition():
    fam = LinkFamily("probit")
    t = np.linspace(-3, 3, 13)
    for d in (0, 1):
        ref = d * np.log(stats.norm.cdf(t)) + (1 - d) * np.log(stats.norm.sf(t))
        assert np.allclose(q_eval(fam, np.full(t.size, d), t).q, ref, rtol=1e-13)


def test_q_examples():
    qv = q_eval(LinkFamily("logit"), 1, 0.0)
    assert qv.q == pytest.approx(math.log(0.5))
    assert qv.q1 == pytest.approx(0.5)
    assert q_eval(LinkFamily("cloglog"), 0, 0.0).q == pytest.approx(-1.0, rel=1e-15)


def test_probit_fd_at_point():
    fam = LinkFamily("probit")
    h = 1e-5
    q = lambda t: q_eval(fam, 1, t).q
    qv = q_eval(fam, 1, 0.7)
    assert qv.q1 == pytest.approx((q(0.7 + h) - q(0.7 - h)) / (2 * h), rel=1e-6)
    assert qv.q2 == pytest.approx((q(0.7 + h) - 2 * q(0.7) + q(0.7 - h)) / h**2, rel=1e-4)


@pytest.mark.parametrize("fam", ALL_FAMILIES, ids=_ids(ALL_FAMILIES))
def test_extreme_arguments_are_finite_and_capped(fam):
    t = np.array([-800.0, -60.0, -30.0, 30.0, 60.0, 800.0])
    for d in (0, 1):
        qv = q_eval(fam, np.full(t.size, d), t)
        assert np.all(np.isfinite(qv.q)) and np.all(qv.q >= math.log(1e-300) - 1e-9)
        assert np.all(np.abs(qv.q1) <= DERIV_CAP) and np.all(np.abs(qv.q2) <= DERIV_CAP)


@pytest.mark.parametrize("fam", B5D_FAMILIES, ids=_ids(B5D_FAMILIES))
def test_strict_concavity_on_compacts(fam):
    t = np.linspace(-6, 6, 241)
    for d in (0, 1):
        assert np.all(q_eval(fam, np.full(t.size, d), t).q2 < 0)


@pytest.mark.parametrize("fam", B5D_FAMILIES, ids=_ids(B5D_FAMILIES))
def test_check_b5d_passes(fam):
    assert check_b5d(fam, -10, 10, 0.01).satisfied


def test_check_b5d_fails_for_cauchy():
    rep = check_b5d(LinkFamily("cauchy"), -10, 10, 0.01)
    assert not rep.satisfied
    assert rep.min2 < 0
    tail = check_b5d(LinkFamily("cauchy"), 5, 10, 0.01)
    assert tail.min2 < 0


def test_check_b5d_margin_sign_matches_raw_condition():
    # the scaled margins have the sign of f^2 - fdot F and f^2 + fdot (1 - F);
    # the raw forms cancel in the tails, so compare on a central range
    t = np.linspace(-2, 2, 81)
    for fam in ALL_FAMILIES:
        F, f, fdot = link_eval(fam, t)
        raw1 = f * f - fdot * F
        raw2 = f * f + fdot * (1 - F)
        rep = check_b5d(fam, -2, 2, 0.05)
        assert rep.satisfied == bool(raw1.min() > 0 and raw2.min() > 0)


def test_ppf_inverts_cdf():
    p = np.array([1e-6, 0.01, 0.3, 0.5, 0.77, 0.999])
    for fam in ALL_FAMILIES:
        assert np.allclose(fam.cdf(fam.ppf(p)), p, rtol=1e-9)


def test_parameter_and_domain_errors():
    with pytest.raises(FamilyError):
        LinkFamily("pareto", 0.0)
    with pytest.raises(FamilyError):
        LinkFamily("gnorm", 1.0)
    with pytest.raises(FamilyError):
        LinkFamily("weibull")
    with pytest.raises(FamilyError):
        link_eval(LinkFamily("logit"), np.inf)
    with pytest.raises(FamilyError):
        check_b5d(LinkFamily("logit"), 1.0, -1.0)


def test_cli_names_round_trip():
    for s in ("cloglog", "logit", "probit", "cauchy", "pareto:2", "gnorm:1.5"):
        assert LinkFamily.from_string(str(LinkFamily.from_string(s))) == LinkFamily.from_string(s)
