"""Pricing engine for European contingent claims under volatility uncertainty.

Upper and lower hedging prices come from a monotone finite-difference solve
of the band-extremal pricing PDE; scenario Monte Carlo under volatility
controls cross-validates them through the state-price representation, and
hedge surfaces extracted from the solve are backtested by replication.
"""

__version__ = "0.1.0"

from .closedform import (
    BsParams,
    black_scholes_delta,
    black_scholes_price,
    convex_reduction_price,
    lognormal_quadrature_price,
)
from .errors import ConfigError, DomainError, ExtrapolationError, SolverError, UvolError
from .hedging import (
    HedgeStrategy,
    PricePair,
    ReplicationReport,
    RepresentationReport,
    extract_strategy,
    hedging_prices,
    replicate,
    representation_check,
)
from .model import (
    AffineOf,
    Butterfly,
    Call,
    CallSpread,
    Curve,
    DerivedCoefficients,
    MarketModel,
    Payoff,
    Put,
    SmoothedDigital,
    TabulatedCurve,
    VolatilityBand,
    derive_coefficients,
    g_apply,
    payoff_eval,
    payoff_is_convex,
)
from .pde import (
    PdeGrid,
    PdeSolution,
    RefinementReport,
    delta_at,
    price_at,
    refinement_study,
    solve_bsb,
    solve_g_heat,
)
from .scenario import (
    ConstantControl,
    GExpectationEstimate,
    ScenarioPath,
    SdeSpec,
    TableControl,
    ThresholdControl,
    TimeGrid,
    VolatilityControl,
    compare_sdes,
    default_control_family,
    estimate_g_expectation,
    girsanov_qv_check,
    simulate_scenario,
    simulate_state_price,
)

__all__ = [name for name in dir() if not name.startswith("_")]
