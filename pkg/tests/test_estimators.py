import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hermite_risk import HermiteRiskModel, MonteCarloRiskModel
from hermite_risk.estimators import check_alpha, check_orders, check_portfolio
from hermite_risk.exceptions import ValidationError
from hermite_risk.measures import RiskConfig, analyze
from hermite_risk.portfolio import DefaultIndicator, Facility, FactorModel, Portfolio


def test_params_and_clone():
    m = HermiteRiskModel(alpha=0.002, cond_cap=5)
    params = m.get_params()
    assert params["alpha"] == 0.002 and params["cond_cap"] == 5
    c = clone(m)
    assert c is not m and c.get_params() == params
    c.set_params(tensor_order=2)
    assert c.tensor_order == 2 and m.tensor_order == 3
    assert "scenarios" in MonteCarloRiskModel().get_params()


def test_fit_matches_analyze(toy10):
    m = HermiteRiskModel(orders="1f,mf2").fit(toy10)
    rep = analyze(toy10, RiskConfig(orders=("onef", "mf2")))
    assert m.var_ == rep.var_total and m.sigma_ == rep.sigma and m.es_ == rep.es_total
    assert m.ids_ == list(toy10.ids)
    assert np.array_equal(m.contributions_["var_c"], rep.contributions["var_c"])
    assert m.score() == -m.var_


def test_unfitted_score():
    with pytest.raises(NotFittedError):
        HermiteRiskModel().score()


def test_monte_carlo_model(toy10):
    m = MonteCarloRiskModel(scenarios=400_000, seed=3).fit(toy10)
    assert m.var_ > 0 and m.var_se_ > 0
    assert m.contributions_.shape == (10,)
    assert m.result_.seed == 3


def test_validation():
    bad = Portfolio((Facility("A", 1.0, 0.5, {0: 0.9, 1: 0.9}, DefaultIndicator(0.01)),), FactorModel(("a", "b")))
    with pytest.raises(ValidationError) as info:
        HermiteRiskModel().fit(bad)
    assert info.value.violations[0].rule == "loading-norm"
    with pytest.raises(TypeError):
        check_portfolio(np.ones((3, 3)))
    for a in (0.0, 0.5, -1):
        with pytest.raises(ValueError):
            check_alpha(a)
    assert check_orders("1f,ga2,mf2") == ("onef", "mf2", "ga2")
    with pytest.raises(ValueError):
        check_orders("1f,mf4")
    with pytest.raises(ValueError):
        HermiteRiskModel(alpha=0.9).fit(bad.__class__(
            (Facility("A", 1.0, 0.5, {0: 1.0}, DefaultIndicator(0.01)),), FactorModel(("a",))))
