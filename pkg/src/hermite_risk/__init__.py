"""Analytic Hermite-expansion risk engine for multi-factor credit portfolios.

The analytic pipeline (``analyze``) produces sigma, VaR and ES with per-order
breakdown and Euler contributions; ``montecarlo`` provides the independent
simulation benchmark.
"""

from .estimators import HermiteRiskModel, MonteCarloRiskModel, check_portfolio
from .exceptions import (
    DegeneratePortfolioError,
    DigestMismatchError,
    DomainError,
    HermiteRiskError,
    InsufficientTailError,
    MonotonicityError,
    NumericalError,
    OrderOverflowError,
    SingularDerivativeError,
    ValidationError,
)
from .measures import RiskConfig, RiskReport, analyze
from .montecarlo import SimConfig, SimResult, simulate, simulate_full, simulate_systematic
from .portfolio import (
    DefaultIndicator,
    Facility,
    FactorModel,
    Portfolio,
    SampledCurve,
    StepFunction,
    load_portfolio,
    portfolio_from_arrays,
    save_portfolio,
    synthesize_benchmark,
    synthesize_heterogeneous,
    validate,
)

__version__ = "0.1.0"
