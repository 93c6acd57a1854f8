import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from hermite_risk.exceptions import DomainError
from hermite_risk.expansion import (
    ConditionalMoments,
    conditional_mu2,
    conditional_tables,
    expand_portfolio,
)
from hermite_risk.hermite import gauss_hermite_rule
from hermite_risk.idio import (
    combine_moments,
    facility_idio_moments,
    facility_idio_moments_closed_form,
    portfolio_idio_moments,
)
from hermite_risk.measures import RiskConfig, analyze
from hermite_risk.portfolio import DefaultIndicator, portfolio_from_arrays

from conftest import random_portfolio, unit_rows


def idio(port, eta1, kmax=6, **kw):
    e = expand_portfolio(port, **kw)
    return portfolio_idio_moments(e, conditional_tables(e, eta1), kmax), e


def survival(port, s):
    c = np.array([ndtri(f.value.pd) for f in port.facilities])
    return ndtr((port.rhos * s - c) / np.sqrt(1 - port.rhos ** 2))


def variance_oracle(port, e, eta1, nodes=96):
    """E over the hidden factors of sum_i w_i^2 p_i (1 - p_i), two-factor toys."""
    rule = gauss_hermite_rule(nodes)
    pts = np.stack([np.full(nodes, eta1), rule.nodes], axis=1) @ e.rotation.matrix
    p = survival(port, pts @ port.loading_matrix.T)
    return float(rule.weights @ ((p * (1 - p)) @ port.weights ** 2)), p, pts, rule


def test_zero_rho_facility_is_constant_in_eta():
    pd = 0.03
    p = portfolio_from_arrays([1.0], [0.0], [[1.0]], [DefaultIndicator(pd)])
    e = expand_portfolio(p)
    s = 1 - pd
    for eta1 in (-3.0, 0.0, 2.0):
        fm = facility_idio_moments(e, eta1)
        assert fm.mu2[0, 0] == pytest.approx(s * (1 - s), rel=1e-12)
        assert fm.mu3[0, 0] == pytest.approx(s * (1 - s) * (1 - 2 * s), rel=1e-10)
        assert abs(fm.mu2[1, 0]) < 1e-15 and abs(fm.mu3[1, 0]) < 1e-15


def test_bernoulli_oracle_single_factor():
    p = portfolio_from_arrays([1.0], [0.5], [[1.0]], [DefaultIndicator(0.01)])
    e = expand_portfolio(p, onef_order=30)
    for eta1 in (-3.09, -1.0, 0.5):
        q = float(survival(p, np.array([eta1]))[0])
        fm = facility_idio_moments(e, eta1)
        assert abs(fm.mu2[0, 0] - q * (1 - q)) < 2e-3
        assert abs(fm.mu3[0, 0] - q * (1 - q) * (1 - 2 * q)) < 2e-3
        cf = facility_idio_moments_closed_form(p, e, eta1)
        assert cf.mu2[0, 0] == pytest.approx(q * (1 - q), rel=1e-10)


def test_principal_only_loading_ignores_k_cap():
    # with b0 = 1 the k >= 1 terms carry sqrt(1 - b0^2)^k = 0
    p = portfolio_from_arrays([1.0], [0.5], [[1.0]], [DefaultIndicator(0.02)])
    e = expand_portfolio(p)
    a = facility_idio_moments(e, -2.0, kmax=0)
    b = facility_idio_moments(e, -2.0, kmax=6)
    assert np.array_equal(a.mu2, b.mu2) and np.array_equal(a.mu3, b.mu3)


def test_series_matches_closed_form(toy_mixed):
    e = expand_portfolio(toy_mixed)
    for eta1 in (-3.09, 0.0):
        cf = facility_idio_moments_closed_form(toy_mixed, e, eta1)
        lo = facility_idio_moments(e, eta1, kmax=6)
        hi = facility_idio_moments(e, eta1, kmax=20)
        assert np.max(np.abs(lo.mu2 - cf.mu2)) < 1e-5
        assert np.max(np.abs(lo.mu3 - cf.mu3)) < 1e-5
        assert np.max(np.abs(hi.mu2 - cf.mu2)) < 1e-10
        assert np.max(np.abs(hi.mu3 - cf.mu3)) < 1e-10


def test_nested_quadrature_oracle():
    p = random_portfolio(3, 2, seed=21)
    im, e = idio(p, 0.0)
    oracle, *_ = variance_oracle(p, e, 0.0)
    assert abs(im.mu2_ga - oracle) < 1e-5


def test_two_facility_sum():
    p = random_portfolio(2, 2, seed=22)
    im, e = idio(p, -1.0)
    fm = im.facility
    assert im.mu2_ga == pytest.approx(float(p.weights ** 2 @ fm.mu2[0]), rel=1e-14)
    assert im.mu3_ga == pytest.approx(float(p.weights ** 3 @ fm.mu3[0]), rel=1e-14)


def test_law_of_total_variance():
    # small rho keeps the order > 3 systematic remainder far below tolerance
    rng = np.random.default_rng(5)
    L = unit_rows(rng.normal(size=(3, 2)))
    p = portfolio_from_arrays([1.0, 0.7, 1.3], [0.15, 0.2, 0.1], L,
                              [DefaultIndicator(0.02), DefaultIndicator(0.05), DefaultIndicator(0.01)])
    eta1 = -1.5
    im, e = idio(p, eta1)
    mu2_mf = conditional_mu2(conditional_tables(e, eta1))[0]
    ga, prob, _, rule = variance_oracle(p, e, eta1)
    cond = prob @ p.weights
    total = ga + float(rule.weights @ (cond - rule.weights @ cond) ** 2)
    total_analytic = combine_moments(ConditionalMoments(eta1, mu2_mf), im).mu2
    assert abs(total_analytic - total) < 1e-5 * total


def test_weight_scaling():
    p = random_portfolio(5, 2, seed=23)
    lam = 2.5
    q = portfolio_from_arrays(lam * p.weights, p.rhos, p.loading_matrix, [f.value for f in p.facilities])
    a, _ = idio(p, -2.0)
    b, _ = idio(q, -2.0)
    assert b.mu2_ga == pytest.approx(lam ** 2 * a.mu2_ga, rel=1e-13)
    assert b.mu3_ga == pytest.approx(lam ** 3 * a.mu3_ga, rel=1e-13)
    assert b.mixed == pytest.approx(lam ** 3 * a.mixed, rel=1e-12)


def test_granularity_vanishes_with_diversification():
    vals = []
    for n in (10, 20, 40):
        p = portfolio_from_arrays(np.full(n, 1.0 / n), np.full(n, 0.5), np.ones((n, 1)),
                                  [DefaultIndicator(0.01)] * n)
        vals.append(idio(p, -3.09)[0].mu2_ga * n)
    assert np.allclose(vals, vals[0], rtol=1e-12)


def test_high_rho_limit():
    p = portfolio_from_arrays([1.0], [0.999], [[1.0]], [DefaultIndicator(0.01)])
    e = expand_portfolio(p)
    cf = facility_idio_moments_closed_form(p, e, -3.09)
    assert cf.mu2[0, 0] < 1e-12
    p2 = portfolio_from_arrays([1.0], [0.5], [[1.0]], [DefaultIndicator(0.01)])
    assert facility_idio_moments_closed_form(p2, expand_portfolio(p2), -3.09).mu2[0, 0] > 1e-3


def test_high_rho_facility_still_gets_ga_contribution():
    rng = np.random.default_rng(24)
    n = 6
    rhos = np.full(n, 0.5)
    rhos[0] = 0.999
    p = portfolio_from_arrays(rng.uniform(0.5, 2.0, n), rhos, np.ones((n, 1)),
                              [DefaultIndicator(0.02)] * n)
    rep = analyze(p, RiskConfig(idio_method="closed_form"))
    fm = facility_idio_moments_closed_form(p, expand_portfolio(p), rep.diagnostics["eta"])
    assert fm.mu2[0, 0] < 1e-10
    assert abs(rep.contributions["var_ga2"][0]) > 1e-6
    assert rep.contributions["var_ga2"].sum() == pytest.approx(rep.breakdown["var_ga2"], rel=1e-10)


def test_eta_derivatives(toy_mixed):
    e = expand_portfolio(toy_mixed)
    h = 1e-4

    def at(x):
        return portfolio_idio_moments(e, conditional_tables(e, x))

    for eta1 in (-2.5, 0.3):
        m, up, dn = at(eta1), at(eta1 + h), at(eta1 - h)
        for val, der in (("mu2_ga", "mu2_ga_prime"), ("mu3_ga", "mu3_ga_prime"),
                         ("mu3_ga_prime", "mu3_ga_second"), ("mixed", "mixed_prime"),
                         ("mixed_prime", "mixed_second")):
            fd = (getattr(up, val) - getattr(dn, val)) / (2 * h)
            assert getattr(m, der) == pytest.approx(fd, rel=1e-5, abs=1e-11)


def test_combine_moments():
    p = random_portfolio(4, 2, seed=25)
    im, _ = idio(p, -1.0)
    sys_m = ConditionalMoments(-1.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    tot = combine_moments(sys_m, im)
    assert tot.mu2 == pytest.approx(0.1 + im.mu2_ga)
    assert tot.mu3 == pytest.approx(0.3 + im.mu3_ga + im.mixed)
    zero = im.as_conditional()
    for f in ("mu2", "mu2_prime", "mu3", "mu3_prime", "mu3_second"):
        setattr(zero, f, 0.0)
    assert ConditionalMoments(-1.0, 0.1, 0.2, 0.3, 0.4, 0.5) + zero == sys_m
    with pytest.raises(DomainError):
        combine_moments(ConditionalMoments(0.5), im)
