"""Market primitives: coefficient curves, the volatility band, and payoffs.

Coefficients are deterministic piecewise-linear curves of time. The band
[v_low, v_high] is the interval of admissible instantaneous variances; the
worst/best-case variance selector ``g_apply`` is the generator of the
nonlinear term in the pricing PDE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ExtrapolationError

SIGMA_FLOOR = 1e-8  # sigma(t) must stay above this so 1/sigma is bounded
CONVEXITY_TOL = 1e-9  # relative tolerance of the convexity detector


# ---------------------------------------------------------------------------
# Deterministic coefficient curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    """Piecewise-linear curve on explicit knots, clamped outside the knot range."""

    ts: tuple[float, ...]
    vs: tuple[float, ...]

    def __post_init__(self):
        if len(self.ts) != len(self.vs) or not self.ts:
            raise ConfigError("curve needs matching, non-empty knot/value lists")
        if any(b <= a for a, b in zip(self.ts, self.ts[1:])):
            raise ConfigError("curve knots must be strictly increasing")
        if not all(math.isfinite(v) for v in self.ts + self.vs):
            raise ConfigError("curve knots must be finite")

    @staticmethod
    def constant(v: float) -> "Curve":
        return Curve((0.0,), (float(v),))

    @staticmethod
    def from_spec(spec) -> "Curve":
        """Build from a scalar or a list of (t, value) pairs."""
        if isinstance(spec, Curve):
            return spec
        if isinstance(spec, (int, float)):
            return Curve.constant(float(spec))
        pairs = [(float(t), float(v)) for t, v in spec]
        return Curve(tuple(t for t, _ in pairs), tuple(v for _, v in pairs))

    def __call__(self, t):
        return np.interp(t, self.ts, self.vs)

    def _breakpoints(self, a: float, b: float) -> np.ndarray:
        inner = [t for t in self.ts if a < t < b]
        return np.array([a] + inner + [b])

    def min_on(self, a: float, b: float) -> float:
        return float(np.min(self(self._breakpoints(a, b))))

    def max_abs_on(self, a: float, b: float) -> float:
        return float(np.max(np.abs(self(self._breakpoints(a, b)))))

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the piecewise-linear curve over [a, b]."""
        if b < a:
            raise ConfigError("integral bounds out of order")
        ts = self._breakpoints(a, b)
        return float(np.trapezoid(self(ts), ts))

    def square_integral(self, a: float, b: float) -> float:
        """Exact integral of curve(t)^2; Simpson per piece is exact for quadratics."""
        if b < a:
            raise ConfigError("integral bounds out of order")
        ts = self._breakpoints(a, b)
        left, right = ts[:-1], ts[1:]
        mid = 0.5 * (left + right)
        f2 = lambda t: self(t) ** 2
        return float(np.sum((right - left) * (f2(left) + 4.0 * f2(mid) + f2(right)) / 6.0))


# ---------------------------------------------------------------------------
# Market model and derived coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketModel:
    """Deterministic market coefficients on [0, T].

    ``r`` is the riskless rate, ``eta`` the asset drift, ``mu`` the loading on
    the realized-variance increment and ``sigma`` the diffusion loading. All
    are per-year piecewise-linear curves.
    """

    r: Curve
    eta: Curve
    mu: Curve
    sigma: Curve
    T: float

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("maturity T must be positive and finite")
        if self.sigma.min_on(0.0, self.T) < SIGMA_FLOOR:
            raise ConfigError(f"sigma(t) must stay >= {SIGMA_FLOOR} on [0, T]")

    def rate_integral(self, a: float, b: float) -> float:
        return self.r.integral(a, b)


@dataclass(frozen=True)
class DerivedCoefficients:
    """Risk-premium curves b = (eta - r)/sigma and d = mu/sigma."""

    b: Curve
    d: Curve


def derive_coefficients(model: MarketModel) -> DerivedCoefficients:
    """Build b and d pointwise on the union of the input curves' knots."""
    knots = sorted({0.0, model.T, *model.r.ts, *model.eta.ts, *model.mu.ts, *model.sigma.ts})
    ts = tuple(float(t) for t in knots)
    sig = np.asarray(model.sigma(np.array(ts)))
    if np.min(sig) < SIGMA_FLOOR:
        raise ConfigError(f"sigma(t) must stay >= {SIGMA_FLOOR} on the knot set")
    b = (np.asarray(model.eta(np.array(ts))) - np.asarray(model.r(np.array(ts)))) / sig
    d = np.asarray(model.mu(np.array(ts))) / sig
    return DerivedCoefficients(Curve(ts, tuple(map(float, b))), Curve(ts, tuple(map(float, d))))


# ---------------------------------------------------------------------------
# Volatility band and the worst-case variance selector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolatilityBand:
    """Interval [v_low, v_high] of admissible instantaneous variances (per year)."""

    v_low: float
    v_high: float

    def __post_init__(self):
        if not (0.0 < self.v_low <= self.v_high and math.isfinite(self.v_high)):
            raise ConfigError("band requires 0 < v_low <= v_high < inf")

    @property
    def sigma_low(self) -> float:
        return math.sqrt(self.v_low)

    @property
    def sigma_high(self) -> float:
        return math.sqrt(self.v_high)


def g_apply(alpha, band: VolatilityBand):
    """Worst-case half-variance load: 0.5 * sup_{v in band} v * alpha.

    Equals 0.5*(v_high*alpha^+ - v_low*alpha^-); positively homogeneous and
    subadditive in alpha. Accepts scalars or arrays.
    """
    a = np.asarray(alpha, dtype=float)
    pos = np.maximum(a, 0.0)
    neg = np.maximum(-a, 0.0)
    out = 0.5 * band.v_high * pos - 0.5 * band.v_low * neg
    return float(out) if np.isscalar(alpha) or out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Payoffs
# ---------------------------------------------------------------------------


class Payoff:
    """European payoff of the terminal price, piecewise-linear in all supported kinds.

    Subclasses implement ``__call__`` (vectorized), ``kinks`` (abscissae where
    the slope changes) and the local-Lipschitz metadata ``lipschitz_L`` /
    ``growth_m``.
    """

    growth_m: int = 0

    def __call__(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def kinks(self) -> tuple[float, ...]:
        return ()

    @property
    def lipschitz_L(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class Call(Payoff):
    strike: float

    def __call__(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.strike, 0.0)

    def kinks(self):
        return (self.strike,)

    @property
    def lipschitz_L(self):
        return 1.0


@dataclass(frozen=True)
class Put(Payoff):
    strike: float

    def __call__(self, x):
        return np.maximum(self.strike - np.asarray(x, dtype=float), 0.0)

    def kinks(self):
        return (self.strike,)

    @property
    def lipschitz_L(self):
        return 1.0


@dataclass(frozen=True)
class CallSpread(Payoff):
    k_low: float
    k_high: float

    def __post_init__(self):
        if not self.k_low < self.k_high:
            raise ConfigError("call spread needs k_low < k_high")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(x - self.k_low, 0.0) - np.maximum(x - self.k_high, 0.0)

    def kinks(self):
        return (self.k_low, self.k_high)

    @property
    def lipschitz_L(self):
        return 1.0


@dataclass(frozen=True)
class Butterfly(Payoff):
    k_low: float
    k_mid: float
    k_high: float

    def __post_init__(self):
        if not self.k_low < self.k_mid < self.k_high:
            raise ConfigError("butterfly needs k_low < k_mid < k_high")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (
            np.maximum(x - self.k_low, 0.0)
            - 2.0 * np.maximum(x - self.k_mid, 0.0)
            + np.maximum(x - self.k_high, 0.0)
        )

    def kinks(self):
        return (self.k_low, self.k_mid, self.k_high)

    @property
    def lipschitz_L(self):
        return 2.0


@dataclass(frozen=True)
class SmoothedDigital(Payoff):
    """Digital smoothed to a linear ramp of half-width ``width`` around the strike."""

    strike: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError("smoothed digital needs width > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - (self.strike - self.width)) / (2.0 * self.width), 0.0, 1.0)

    def kinks(self):
        return (self.strike - self.width, self.strike + self.width)

    @property
    def lipschitz_L(self):
        return 0.5 / self.width


@dataclass(frozen=True)
class TabulatedCurve(Payoff):
    """Payoff sampled at increasing abscissae with linear interpolation.

    Queries outside the sampled range raise; callers must sample wide enough
    for the grid they price on (silent extrapolation can corrupt boundaries).
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self):
        if len(self.xs) != len(self.ys) or len(self.xs) < 2:
            raise ConfigError("tabulated payoff needs >= 2 matching samples")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise ConfigError("tabulated payoff abscissae must be strictly increasing")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.xs[0]) or np.any(x > self.xs[-1]):
            raise ExtrapolationError(
                f"tabulated payoff queried outside [{self.xs[0]}, {self.xs[-1]}]"
            )
        return np.interp(x, self.xs, self.ys)

    def kinks(self):
        return self.xs[1:-1]

    @property
    def lipschitz_L(self):
        slopes = np.diff(self.ys) / np.diff(self.xs)
        return float(np.max(np.abs(slopes))) if len(slopes) else 0.0


@dataclass(frozen=True)
class AffineOf(Payoff):
    """scale * base(x) + shift; keeps kinks, used for sign/translation plumbing."""

    base: Payoff
    scale: float = 1.0
    shift: float = 0.0

    def __call__(self, x):
        return self.scale * self.base(x) + self.shift

    def kinks(self):
        return self.base.kinks()

    @property
    def lipschitz_L(self):
        return abs(self.scale) * self.base.lipschitz_L

    @property
    def growth_m(self):
        return self.base.growth_m


def payoff_eval(p: Payoff, x):
    """Evaluate the payoff at price(s) x >= 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ConfigError("payoff queried at negative price")
    out = p(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def payoff_is_convex(p: Payoff, grid) -> bool:
    """True iff all second divided differences on the grid are >= -tol.

    tol scales with the payoff magnitude on the grid so rounding in tabulated
    payoffs does not misclassify genuine kinks.
    """
    xs = np.asarray(grid, dtype=float)
    if xs.ndim != 1 or xs.size < 3:
        raise ConfigError("convexity check needs >= 3 grid points")
    if np.any(np.diff(xs) <= 0):
        raise ConfigError("convexity grid must be strictly increasing")
    ys = np.asarray(p(xs), dtype=float)
    slopes = np.diff(ys) / np.diff(xs)
    second = np.diff(slopes) / (xs[2:] - xs[:-2])
    tol = CONVEXITY_TOL * max(1.0, float(np.max(np.abs(ys))))
    return bool(np.all(second >= -tol))
