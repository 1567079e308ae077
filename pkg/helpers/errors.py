"""
Error taxonomy shared by the solvers, the simulator and the CLI.
Every error carries a stable code so callers can branch without string matching.
"""


class FeeMarketError(ValueError):
    """Base class for all library errors."""

    code = "FEE_MARKET_ERROR"

    def __init__(self, message: str):
        super().__init__(f"[{self.code}] {message}")
        self.detail = message


class NoBracketError(FeeMarketError):
    """Root-finder endpoints do not bracket a sign change."""

    code = "NO_BRACKET"


class MaxIterError(FeeMarketError):
    """Iterative routine did not converge within its iteration budget."""

    code = "MAX_ITER"


class BadRateError(FeeMarketError):
    """Non-positive rate passed to a sampler."""

    code = "BAD_RATE"


class DomainError(FeeMarketError):
    """Input lies outside the domain where a formula is valid."""

    code = "DOMAIN"


class BadConfigError(FeeMarketError):
    """Simulation or estimation configuration violates its invariants."""

    code = "BAD_CONFIG"


class GridTooCoarseError(FeeMarketError):
    """Grid spacing too wide for a finite-difference check."""

    code = "GRID_TOO_COARSE"


class InsufficientCurveError(FeeMarketError):
    """Sampled curve does not cover the points an operation needs."""

    code = "INSUFFICIENT_CURVE"


class InvalidParameterError(FeeMarketError):
    """Market parameter or CLI value violates its invariant."""

    code = "INVALID_PARAMETER"
