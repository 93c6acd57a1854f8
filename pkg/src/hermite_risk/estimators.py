"""scikit-learn style front ends to the analytic engine and the simulator.

Both estimators follow the covariance-estimator pattern: ``fit`` takes a
portfolio (there is no target), stores fitted attributes with a trailing
underscore and returns ``self``. Hyper-parameters are plain constructor
arguments so ``get_params``/``set_params``/``clone`` work unchanged.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .measures import ORDER_FLAGS, RiskConfig, analyze
from .montecarlo import SimConfig, simulate
from .portfolio import Portfolio, validate


def check_portfolio(portfolio) -> Portfolio:
    """Return ``portfolio`` unchanged or raise :class:`ValidationError`."""
    if not isinstance(portfolio, Portfolio):
        raise TypeError(f"expected a Portfolio, got {type(portfolio).__name__}")
    violations = validate(portfolio)
    if violations:
        raise ValidationError(violations)
    return portfolio


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    return alpha


def check_orders(orders) -> tuple[str, ...]:
    if isinstance(orders, str):
        orders = [o.strip() for o in orders.split(",") if o.strip()]
    orders = tuple("onef" if o == "1f" else o for o in orders)
    bad = [o for o in orders if o not in ORDER_FLAGS]
    if bad:
        raise ValueError(f"unknown orders {bad}; choose from 1f,mf2,mf3,ga2,ga3")
    return tuple(o for o in ORDER_FLAGS if o in orders)


class HermiteRiskModel(BaseEstimator):
    """Analytic sigma / VaR / ES with Euler contributions.

    Fitted attributes: ``report_``, ``sigma_``, ``var_``, ``es_``,
    ``breakdown_``, ``contributions_`` (dict of per-facility arrays),
    ``ids_``.
    """

    def __init__(self, alpha=0.001, orders=ORDER_FLAGS, onef_order=30, tensor_order=3,
                 cond_cap=8, idio_k_cap=6, idio_method="series", mu3_terms="standard",
                 coef_method="exact", principal=None):
        self.alpha = alpha
        self.orders = orders
        self.onef_order = onef_order
        self.tensor_order = tensor_order
        self.cond_cap = cond_cap
        self.idio_k_cap = idio_k_cap
        self.idio_method = idio_method
        self.mu3_terms = mu3_terms
        self.coef_method = coef_method
        self.principal = principal

    def _config(self) -> RiskConfig:
        return RiskConfig(
            alpha=check_alpha(self.alpha), orders=check_orders(self.orders),
            onef_order=int(self.onef_order), tensor_order=int(self.tensor_order),
            cond_cap=int(self.cond_cap), idio_k_cap=int(self.idio_k_cap),
            idio_method=self.idio_method, mu3_terms=self.mu3_terms,
            coef_method=self.coef_method,
            principal=None if self.principal is None else tuple(np.asarray(self.principal, dtype=float)),
        )

    def fit(self, X, y=None):
        portfolio = check_portfolio(X)
        rep = analyze(portfolio, self._config())
        self.report_ = rep
        self.sigma_ = rep.sigma
        self.var_ = rep.var_total
        self.es_ = rep.es_total
        self.breakdown_ = rep.breakdown
        self.contributions_ = rep.contributions
        self.ids_ = rep.ids
        return self

    def score(self, X=None, y=None):
        """Negative VaR, so that larger is better as sklearn expects."""
        check_is_fitted(self, "report_")
        return -self.var_


class MonteCarloRiskModel(BaseEstimator):
    """Plain Monte Carlo VaR / ES with window contributions."""

    def __init__(self, alpha=0.001, scenarios=1_000_000, seed=0, mode="systematic",
                 window=None, batch_size=16_384, workers=1):
        self.alpha = alpha
        self.scenarios = scenarios
        self.seed = seed
        self.mode = mode
        self.window = window
        self.batch_size = batch_size
        self.workers = workers

    def fit(self, X, y=None):
        portfolio = check_portfolio(X)
        cfg = SimConfig(
            scenarios=int(self.scenarios), seed=int(self.seed), mode=self.mode,
            alpha=check_alpha(self.alpha),
            window=None if self.window is None else tuple(self.window),
            batch_size=int(self.batch_size), workers=int(self.workers),
        )
        res = simulate(portfolio, cfg)
        self.result_ = res
        self.var_ = res.var_estimate
        self.var_se_ = res.var_std_error
        self.es_ = res.es_estimate
        self.contributions_ = res.contributions
        self.contribution_se_ = res.contribution_se
        self.ids_ = res.ids
        return self
