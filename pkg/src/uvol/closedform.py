"""Single-volatility closed forms and quadrature oracles.

The normal CDF uses the platform error function (``math.erfc``), accurate to
a few ulp, well inside the 1e-12 oracle budget. The quadrature route is an
adaptive Simpson rule over the standardized log-return, split at payoff
kinks, so the two pricing routes stay independent of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SolverError
from .model import MarketModel, Payoff, VolatilityBand, payoff_is_convex

QUAD_Z_BOUND = 10.0  # truncation of the standardized log-return
QUAD_ABS_TOL = 1e-9
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def norm_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


@dataclass(frozen=True)
class BsParams:
    """Lognormal pricing inputs with the rate reduced to its integral over [tau, T]."""

    spot: float
    strike: float
    rate_integral: float
    sigma: float
    tau: float
    T: float

    def __post_init__(self):
        if not (self.spot > 0 and math.isfinite(self.spot)):
            raise ConfigError("spot must be positive")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if not self.tau < self.T:
            raise ConfigError("need tau < T")

    @property
    def tenor(self) -> float:
        return self.T - self.tau


def black_scholes_price(p: BsParams, kind: str = "call") -> float:
    """Standard lognormal closed form; sigma = 0 degenerates to the discounted forward payoff."""
    if kind not in ("call", "put"):
        raise ConfigError(f"unknown option kind {kind!r}")
    df = math.exp(-p.rate_integral)
    st = p.sigma * math.sqrt(p.tenor)
    if st == 0.0:
        fwd = p.spot / df
        intrinsic = max(fwd - p.strike, 0.0) if kind == "call" else max(p.strike - fwd, 0.0)
        return df * intrinsic
    d1 = (math.log(p.spot / p.strike) + p.rate_integral + 0.5 * st * st) / st
    d2 = d1 - st
    if kind == "call":
        return p.spot * norm_cdf(d1) - p.strike * df * norm_cdf(d2)
    return p.strike * df * norm_cdf(-d2) - p.spot * norm_cdf(-d1)


def black_scholes_delta(p: BsParams, kind: str = "call") -> float:
    st = p.sigma * math.sqrt(p.tenor)
    if st == 0.0:
        fwd = p.spot * math.exp(p.rate_integral)
        inside = fwd > p.strike
        return (1.0 if inside else 0.0) if kind == "call" else (-1.0 if not inside else 0.0)
    d1 = (math.log(p.spot / p.strike) + p.rate_integral + 0.5 * st * st) / st
    return norm_cdf(d1) if kind == "call" else norm_cdf(d1) - 1.0


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return _adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _adaptive_simpson(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def _simpson_on(f, a, b, tol):
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48)


def lognormal_quadrature_price(p: Payoff, s: BsParams) -> float:
    """Discounted expectation of p(S_T) under the constant-sigma lognormal law.

    Integrates the standardized log-return on [-10, 10], splitting at the
    z-images of payoff kinks so the adaptive rule refines only where needed.
    """
    df = math.exp(-s.rate_integral)
    st = s.sigma * math.sqrt(s.tenor)
    if st == 0.0:
        return df * float(p(np.asarray(s.spot * math.exp(s.rate_integral))))
    log_mean = math.log(s.spot) + s.rate_integral - 0.5 * st * st

    def integrand(z: float) -> float:
        return norm_pdf(z) * float(p(np.asarray(math.exp(log_mean + st * z))))

    cuts = [-QUAD_Z_BOUND, QUAD_Z_BOUND]
    for k in p.kinks():
        if k > 0:
            z = (math.log(k) - log_mean) / st
            if -QUAD_Z_BOUND < z < QUAD_Z_BOUND:
                cuts.append(z)
    cuts = sorted(cuts)
    tol_piece = QUAD_ABS_TOL / max(1, len(cuts) - 1)
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        total += _simpson_on(integrand, a, b, tol_piece)
    return df * total


def _convexity_probe_grid(p: Payoff, model: MarketModel, band: VolatilityBand, tau, spot):
    width = max(band.sigma_high * math.sqrt(model.sigma.square_integral(tau, model.T)), 1e-3)
    zs = np.linspace(-QUAD_Z_BOUND * width, QUAD_Z_BOUND * width, 257)
    xs = spot * np.exp(zs)
    kink_pts = [k for k in p.kinks() if xs[0] < k < xs[-1]]
    return np.unique(np.concatenate([xs, np.asarray(kink_pts, dtype=float)]))


def convex_reduction_price(
    p: Payoff,
    model: MarketModel,
    band: VolatilityBand,
    tau: float,
    spot: float,
    side: str,
):
    """Price a convex payoff at the extremal constant variance; None when not applicable.

    For convex payoffs the optimal variance control is the band edge, so the
    price reduces to a single lognormal expectation with total variance
    v_edge * integral of sigma(t)^2 over [tau, T].
    """
    if side not in ("super", "sub"):
        raise ConfigError(f"unknown side {side!r}")
    if not payoff_is_convex(p, _convexity_probe_grid(p, model, band, tau, spot)):
        return None
    v_edge = band.v_high if side == "super" else band.v_low
    total_var = v_edge * model.sigma.square_integral(tau, model.T)
    tenor = model.T - tau
    if tenor <= 0:
        raise ConfigError("need tau < T")
    params = BsParams(
        spot=spot,
        strike=spot,  # unused by the quadrature; kept for reporting
        rate_integral=model.rate_integral(tau, model.T),
        sigma=math.sqrt(total_var / tenor),
        tau=tau,
        T=model.T,
    )
    value = lognormal_quadrature_price(p, params)
    if not math.isfinite(value):
        raise SolverError("quadrature returned a non-finite price")
    return value
