"""Exception types shared across the engine.

The split matters for the service/CLI layer: configuration problems map to
exit code 2 (HTTP 400/422), numerical failures to exit code 3 (HTTP 500).
"""


class UvolError(Exception):
    """Base class for all engine errors."""


class ConfigError(UvolError):
    """Invalid inputs: bad curves, bands, payoffs, grids or run configuration."""


class SolverError(UvolError):
    """Numerical failure: stability violation, NaN blow-up, failed cross-check."""


class ExtrapolationError(SolverError):
    """Tabulated payoff queried outside its sampled range."""


class DomainError(SolverError):
    """Query outside the solved space-time domain."""
