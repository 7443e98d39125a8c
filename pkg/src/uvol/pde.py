"""Backward-in-time monotone finite-difference solver for the worst/best-case
volatility pricing PDE and the nonlinear heat equation of the band.

The scheme is explicit Euler with a positive-coefficient spatial stencil: the
second-derivative term is central, the first-order term is central whenever
the diffusion dominates (which keeps every stencil weight nonnegative) and
upwinded otherwise. Each node update is therefore a convex combination plus
source of the previous row, the per-node nonlinearity is an exact max/min over
the two band edges, and the sweep converges to the viscosity solution under
refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, SolverError
from .model import Curve, MarketModel, VolatilityBand

DOMAIN_WIDTH_SIGMAS = 6.0  # default half-width of the log grid, in terminal std devs
CFL_SAFETY = 0.9
DEFAULT_SLICE_CAP = 2049  # retained time rows per solution
GRID_TOL_REL = 0.005  # default relative accuracy target at the anchor spot


@dataclass(frozen=True)
class PdeGrid:
    """Space-time grid description; bounds default to anchor*exp(+-6 sigma sqrt(T))."""

    anchor_spot: float
    n_x: int = 400
    x_mode: str = "log"
    x_min: float | None = None
    x_max: float | None = None
    n_t: int | None = None  # None -> auto from the stability bound
    slice_cap: int = DEFAULT_SLICE_CAP
    width_sigmas: float = DOMAIN_WIDTH_SIGMAS

    def __post_init__(self):
        if self.x_mode not in ("log", "arithmetic"):
            raise ConfigError(f"unknown x_mode {self.x_mode!r}")
        if self.n_x < 16:
            raise ConfigError("need n_x >= 16 interior nodes")
        if self.n_t is not None and self.n_t < 1:
            raise ConfigError("n_t must be >= 1 when forced")
        if self.slice_cap < 2:
            raise ConfigError("slice_cap must be >= 2")
        if not math.isfinite(self.anchor_spot):
            raise ConfigError("anchor_spot must be finite")
        if self.x_mode == "log" and self.anchor_spot <= 0:
            raise ConfigError("log grid needs a positive anchor spot")
        if self.x_min is not None and self.x_max is not None:
            if not self.x_min < self.anchor_spot < self.x_max:
                raise ConfigError("need x_min < anchor_spot < x_max")

    def resolve_bounds(self, model: MarketModel, band: VolatilityBand) -> tuple[float, float]:
        if self.x_min is not None and self.x_max is not None:
            return float(self.x_min), float(self.x_max)
        sigma_max = max(abs(model.sigma(t)) for t in {0.0, model.T, *model.sigma.ts})
        half = self.width_sigmas * band.sigma_high * sigma_max * math.sqrt(model.T)
        if self.x_mode == "log":
            return self.anchor_spot * math.exp(-half), self.anchor_spot * math.exp(half)
        return self.anchor_spot - half, self.anchor_spot + half


@dataclass(frozen=True)
class PdeSolution:
    """Retained value surface u(t_i, x_j), times ascending, terminal row last."""

    grid: PdeGrid
    side: str
    times: np.ndarray
    nodes: np.ndarray  # price-space abscissae
    values: np.ndarray  # (len(times), len(nodes))
    model: MarketModel
    band: VolatilityBand
    n_t_total: int
    dx: float  # uniform spacing in the solve coordinate (log or arithmetic)

    @property
    def terminal_row(self) -> np.ndarray:
        return self.values[-1]


def _candidate_coeffs(a: float, drift: float, disc: float, dt: float, dx: float):
    """Stencil weights (lower, diag, upper) for one variance candidate.

    Central first differences when a/dx >= |drift|/2 (all weights stay
    nonnegative), one-sided upwind otherwise.
    """
    if a >= 0.5 * abs(drift) * dx:
        c_m = dt * (a / dx**2 - drift / (2.0 * dx))
        c_p = dt * (a / dx**2 + drift / (2.0 * dx))
        c_d = 1.0 - dt * (2.0 * a / dx**2 + disc)
    else:
        c_m = dt * (a / dx**2 + max(-drift, 0.0) / dx)
        c_p = dt * (a / dx**2 + max(drift, 0.0) / dx)
        c_d = 1.0 - dt * (2.0 * a / dx**2 + abs(drift) / dx + disc)
    return c_m, c_d, c_p


def _operator_terms(t: float, v: float, model: MarketModel, mode: str):
    """(diffusion a, advection drift, discount) of one candidate at time t."""
    if mode == "log":
        s2 = float(model.sigma(t)) ** 2
        r = float(model.r(t))
        return 0.5 * v * s2, r - 0.5 * v * s2, r
    s2 = float(model.sigma(t)) ** 2
    return 0.5 * v * s2, 0.0, float(model.r(t))


def _stability_rate(model: MarketModel, band: VolatilityBand, mode: str, dx: float) -> float:
    """Worst-case explicit-step rate over time and both variance candidates."""
    probes = sorted({0.0, model.T, *model.r.ts, *model.sigma.ts} | set(np.linspace(0.0, model.T, 65)))
    worst = 0.0
    for t in probes:
        for v in (band.v_low, band.v_high):
            a, drift, disc = _operator_terms(t, v, model, mode)
            worst = max(worst, 2.0 * a / dx**2 + abs(drift) / dx + max(disc, 0.0))
    return worst


def _resolve_steps(grid: PdeGrid, model: MarketModel, band: VolatilityBand, dx: float) -> int:
    rate = _stability_rate(model, band, grid.x_mode, dx)
    n_min = max(1, int(math.ceil(model.T * rate)))
    if grid.n_t is not None:
        if grid.n_t < n_min:
            raise SolverError(
                f"n_t={grid.n_t} violates the explicit stability bound (need >= {n_min})"
            )
        return grid.n_t
    return max(1, int(math.ceil(model.T * rate / CFL_SAFETY)))


def _payoff_values(payoff, nodes: np.ndarray) -> np.ndarray:
    vals = np.asarray(payoff(nodes), dtype=float)
    if vals.shape != nodes.shape:
        raise ConfigError("payoff must evaluate elementwise on the grid nodes")
    if not np.all(np.isfinite(vals)):
        raise SolverError("payoff produced non-finite values on the grid")
    return vals


def solve_bsb(
    payoff,
    model: MarketModel,
    band: VolatilityBand,
    grid: PdeGrid,
    side: str = "super",
) -> PdeSolution:
    """Backward sweep from t=T to t=0 of the band-extremal pricing equation.

    side="super" takes the per-node max over the two variance candidates
    (worst case for the seller), side="sub" the min. The terminal row equals
    the sampled payoff bit-exactly.
    """
    if side not in ("super", "sub"):
        raise ConfigError(f"unknown side {side!r}")
    lo, hi = grid.resolve_bounds(model, band)
    if grid.x_mode == "log":
        if lo <= 0:
            raise ConfigError("log grid needs positive bounds")
        coords = np.linspace(math.log(lo), math.log(hi), grid.n_x + 2)
        nodes = np.exp(coords)
    else:
        coords = np.linspace(lo, hi, grid.n_x + 2)
        nodes = coords.copy()
    dx = float(coords[1] - coords[0])

    n_t = _resolve_steps(grid, model, band, dx)
    dt = model.T / n_t
    times = np.linspace(0.0, model.T, n_t + 1)

    stride = max(1, int(math.ceil((n_t + 1) / grid.slice_cap)))
    retained = sorted(set(range(0, n_t + 1, stride)) | {0, n_t})
    retained_set = set(retained)
    rows = {n_t: _payoff_values(payoff, nodes)}

    w = rows[n_t].copy()
    pick = np.maximum if side == "super" else np.minimum
    for k in range(n_t - 1, -1, -1):
        t_data = times[k + 1]
        out = None
        for v in (band.v_low, band.v_high):
            a, drift, disc = _operator_terms(t_data, v, model, grid.x_mode)
            c_m, c_d, c_p = _candidate_coeffs(a, drift, disc, dt, dx)
            cand = np.empty_like(w)
            cand[1:-1] = c_m * w[:-2] + c_d * w[1:-1] + c_p * w[2:]
            # boundaries: zero second derivative; the linear-continuation ghost
            # makes both advection directions collapse to the inward difference
            cb_d = 1.0 - dt * (abs(drift) / dx + disc)
            cb_i = dt * abs(drift) / dx
            cand[0] = cb_d * w[0] + cb_i * w[1]
            cand[-1] = cb_d * w[-1] + cb_i * w[-2]
            out = cand if out is None else pick(out, cand)
        w = out
        if (k % 256 == 0 or k == 0) and not np.all(np.isfinite(w)):
            bad = int(np.count_nonzero(~np.isfinite(w)))
            raise SolverError(f"non-finite values at step {k} ({bad} nodes): diverging sweep")
        if k in retained_set:
            rows[k] = w.copy()

    values = np.vstack([rows[k] for k in retained])
    return PdeSolution(
        grid=grid,
        side=side,
        times=times[retained],
        nodes=nodes,
        values=values,
        model=model,
        band=band,
        n_t_total=n_t,
        dx=dx,
    )


def solve_g_heat(phi, band: VolatilityBand, t_horizon: float, grid: PdeGrid) -> PdeSolution:
    """Nonlinear band heat equation du/dt = g_apply(u_xx); u(0, x) = phi(x).

    Implemented as the backward sweep with zero rate and drift on an
    arithmetic grid, then reindexed so times run forward from the initial
    condition: row 0 holds phi, the last row holds u(t_horizon, .).
    """
    if grid.x_mode != "arithmetic":
        raise ConfigError("band heat equation requires an arithmetic grid")
    if not t_horizon > 0:
        raise ConfigError("t_horizon must be positive")
    aux_model = MarketModel(
        r=Curve.constant(0.0),
        eta=Curve.constant(0.0),
        mu=Curve.constant(0.0),
        sigma=Curve.constant(1.0),
        T=float(t_horizon),
    )
    sol = solve_bsb(phi, aux_model, band, grid, side="super")
    return PdeSolution(
        grid=sol.grid,
        side=sol.side,
        times=(t_horizon - sol.times)[::-1].copy(),
        nodes=sol.nodes,
        values=sol.values[::-1].copy(),
        model=aux_model,
        band=band,
        n_t_total=sol.n_t_total,
        dx=sol.dx,
    )


def _time_bracket(sol: PdeSolution, t: float):
    times = sol.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise DomainError(f"time {t} outside [{times[0]}, {times[-1]}]")
    t = min(max(t, times[0]), times[-1])
    i = int(np.searchsorted(times, t, side="right") - 1)
    i = min(max(i, 0), len(times) - 2)
    span = times[i + 1] - times[i]
    lam = 0.0 if span == 0 else (t - times[i]) / span
    return i, lam


def _row_at(sol: PdeSolution, t: float) -> np.ndarray:
    i, lam = _time_bracket(sol, t)
    if lam == 0.0:
        return sol.values[i]
    return (1.0 - lam) * sol.values[i] + lam * sol.values[i + 1]


def price_at(sol: PdeSolution, t: float, x: float) -> float:
    """Bilinear interpolation of the stored surface at (t, x)."""
    nodes = sol.nodes
    if x < nodes[0] or x > nodes[-1]:
        raise DomainError(f"spot {x} outside [{nodes[0]}, {nodes[-1]}]")
    row = _row_at(sol, t)
    return float(np.interp(x, nodes, row))


def node_deltas(sol: PdeSolution, t: float) -> np.ndarray:
    """du/dx per node at time t: central in the solve coordinate, one-sided at the ends."""
    row = _row_at(sol, t)
    nodes = sol.nodes
    out = np.empty_like(row)
    out[1:-1] = (row[2:] - row[:-2]) / (nodes[2:] - nodes[:-2])
    out[0] = (row[1] - row[0]) / (nodes[1] - nodes[0])
    out[-1] = (row[-1] - row[-2]) / (nodes[-1] - nodes[-2])
    return out


def delta_at(sol: PdeSolution, t: float, x: float) -> float:
    """Finite-difference du/dx of the interpolated surface at (t, x)."""
    nodes = sol.nodes
    if x < nodes[0] or x > nodes[-1]:
        raise DomainError(f"spot {x} outside [{nodes[0]}, {nodes[-1]}]")
    return float(np.interp(x, nodes, node_deltas(sol, t)))


@dataclass(frozen=True)
class RefinementLevel:
    n_x: int
    n_t: int
    h: float
    price: float
    error_vs_finest: float
    diff_vs_prev: float | None


@dataclass(frozen=True)
class RefinementReport:
    levels: tuple[RefinementLevel, ...]
    observed_order: float | None
    cauchy: bool

    def prices(self) -> list[float]:
        return [lev.price for lev in self.levels]


def refinement_study(
    payoff,
    model: MarketModel,
    band: VolatilityBand,
    base_grid: PdeGrid,
    levels: int,
    side: str = "super",
    tau: float = 0.0,
) -> RefinementReport:
    """Doubling refinement of n_x (n_t from the stability rule) at the anchor spot.

    The observed order is the least-squares slope of log|error vs finest|
    against log h over the non-finest levels; ``cauchy`` reports whether
    successive price differences shrink monotonically.
    """
    if levels < 3:
        raise ConfigError("refinement study needs >= 3 levels")
    lo, hi = base_grid.resolve_bounds(model, band)  # freeze domain across levels
    records = []
    for lev in range(levels):
        g = PdeGrid(
            anchor_spot=base_grid.anchor_spot,
            n_x=base_grid.n_x * (2**lev),
            x_mode=base_grid.x_mode,
            x_min=lo,
            x_max=hi,
            slice_cap=2,
        )
        sol = solve_bsb(payoff, model, band, g, side=side)
        price = price_at(sol, tau, base_grid.anchor_spot)
        records.append((g.n_x, sol.n_t_total, sol.dx, price))

    finest = records[-1][3]
    out = []
    for i, (n_x, n_t, h, price) in enumerate(records):
        diff = None if i == 0 else price - records[i - 1][3]
        out.append(
            RefinementLevel(
                n_x=n_x,
                n_t=n_t,
                h=h,
                price=price,
                error_vs_finest=price - finest,
                diff_vs_prev=diff,
            )
        )

    errs = np.array([abs(lev.error_vs_finest) for lev in out[:-1]])
    hs = np.array([lev.h for lev in out[:-1]])
    order = None
    if np.all(errs > 0):
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        order = float(slope)
    diffs = [abs(lev.diff_vs_prev) for lev in out[1:]]
    cauchy = all(b < a for a, b in zip(diffs, diffs[1:])) if len(diffs) >= 2 else True
    return RefinementReport(levels=tuple(out), observed_order=order, cauchy=cauchy)
