import numpy as np
import pytest

from hermite_risk.portfolio import DefaultIndicator, StepFunction, portfolio_from_arrays


def unit_rows(a):
    a = np.asarray(a, dtype=float)
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def random_portfolio(n_fac=10, n_factors=3, seed=3, values=None):
    rng = np.random.default_rng(seed)
    loadings = unit_rows(rng.normal(size=(n_fac, n_factors)))
    weights = rng.uniform(0.5, 2.0, n_fac)
    rhos = rng.uniform(0.3, 0.7, n_fac)
    if values is None:
        values = [DefaultIndicator(p) for p in rng.uniform(0.005, 0.03, n_fac)]
    return portfolio_from_arrays(weights, rhos, loadings, values)


@pytest.fixture
def toy10():
    """3-factor, 10-facility default-only portfolio."""
    return random_portfolio()


@pytest.fixture
def toy_mixed():
    """3-factor, 6-facility portfolio with step values of different shapes."""
    rng = np.random.default_rng(8)
    values = [
        DefaultIndicator(0.02),
        StepFunction((-2.0, 1.0), (0.3, 0.9, 1.05)),
        DefaultIndicator(0.01, 1.0, 0.45),
        StepFunction((-1.5,), (0.0, 1.0)),
        DefaultIndicator(0.05),
        StepFunction((-2.5, -1.0, 1.5), (0.2, 0.8, 1.0, 1.02)),
    ]
    loadings = unit_rows(rng.normal(size=(6, 3)))
    return portfolio_from_arrays(rng.uniform(0.5, 2, 6), rng.uniform(0.3, 0.7, 6), loadings, values)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
