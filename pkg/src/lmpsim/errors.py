class LmpsimError(Exception):
    """Base class for all errors raised by this package."""


class CaseError(LmpsimError):
    """Malformed case document or violated case invariant."""


class NetworkError(LmpsimError):
    """Disconnected or unobservable network."""


class EstimationError(LmpsimError):
    """State estimation cannot be carried out (singular operators, bad dims)."""


class PricingError(LmpsimError):
    """Ex-post pricing LP failed (infeasible pattern, unbounded market data)."""


class ConfigError(LmpsimError):
    """Invalid scenario or CLI configuration."""


class ConvergenceError(LmpsimError):
    """Iterative solver (power flow / Gauss-Newton) failed to converge."""
