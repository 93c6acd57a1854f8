"""Exception hierarchy shared by the engine, the simulator and the CLI."""


class HermiteRiskError(Exception):
    """Base class for all package errors."""


class OrderOverflowError(HermiteRiskError, ValueError):
    """Requested polynomial/series order exceeds the configured cap."""


class DomainError(HermiteRiskError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ValidationError(HermiteRiskError, ValueError):
    """Portfolio failed validation; ``violations`` lists every broken rule."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{v.facility_id}: {v.rule} ({v.detail})" for v in self.violations]
        super().__init__("invalid portfolio:\n  " + "\n  ".join(lines) if lines else "invalid portfolio")


class DegeneratePortfolioError(HermiteRiskError):
    """Portfolio has no first-order systematic sensitivity."""


class NumericalError(HermiteRiskError, ArithmeticError):
    """Base class for failures of the analytic approximation itself."""


class MonotonicityError(NumericalError):
    """Single-factor value is not increasing at the quantile point."""

    def __init__(self, eta, slope):
        self.eta = float(eta)
        self.slope = float(slope)
        super().__init__(
            f"V_1f'(eta={self.eta:.6g}) = {self.slope:.6g} <= 0; the single-factor "
            "value is not monotone at the quantile, review the expansion orders"
        )


class SingularDerivativeError(NumericalError):
    """Vanishing single-factor slope in an adjustment formula."""


class InsufficientTailError(HermiteRiskError):
    """Too few simulated scenarios fall inside the contribution window."""


class DigestMismatchError(HermiteRiskError):
    """Two reports were produced from different portfolio files."""
