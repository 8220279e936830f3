"""Fixed-domain (front-fixing) formulation of the American call problem.

With ``tau = T - t`` and ``x = log(rho(tau) / S)`` the continuation region
``0 < S < rho(tau)`` becomes the half line ``x > 0``.  The unknowns are the
synthetic portfolio ``Pi = V - S V_S`` on ``[0, L]`` and the boundary
position ``rho(tau)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import OutOfRegionError

__all__ = [
    "MarketParams",
    "Grid",
    "PortfolioState",
    "BoundaryCurve",
    "PriceQuote",
    "initial_state",
    "to_asset_price",
    "reconstruct_price",
    "option_price",
    "write_snapshots_csv",
    "CSV_FLOAT",
]

# 17 significant digits round-trip a double exactly
CSV_FLOAT = "{:.17g}"


@dataclass(frozen=True)
class MarketParams:
    """Strike ``e_strike``, rate ``r_rate``, dividend yield ``q_div``, maturity ``t_mat``."""

    e_strike: float = 10.0
    r_rate: float = 0.1
    q_div: float = 0.05
    t_mat: float = 1.0

    def __post_init__(self):
        if not self.e_strike > 0:
            raise ValueError("strike must be positive")
        if not self.t_mat > 0:
            raise ValueError("maturity must be positive")
        if not 0 < self.q_div <= self.r_rate:
            raise ValueError("need 0 < q_div <= r_rate")

    @property
    def rho0(self) -> float:
        """Boundary position at expiry, ``r E / q``."""
        return self.r_rate * self.e_strike / self.q_div

    @property
    def log_jump(self) -> float:
        """Location ``log(r/q)`` of the jump in the initial portfolio."""
        return math.log(self.r_rate / self.q_div)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, x_len] x [0, T]`` with ``n_space`` cells and ``m_time`` steps."""

    x_len: float
    n_space: int
    m_time: int
    t_mat: float = 1.0

    def __post_init__(self):
        if not self.x_len > 0:
            raise ValueError("x_len must be positive")
        if self.n_space < 2:
            raise ValueError("n_space must be >= 2")
        if self.m_time < 1:
            raise ValueError("m_time must be >= 1")
        if not self.t_mat > 0:
            raise ValueError("t_mat must be positive")

    @classmethod
    def from_cfl(cls, h: float, cfl_ratio: float, sigma_hat: float, t_mat: float = 1.0, x_len: float = 3.0) -> "Grid":
        """Grid with spatial step close to ``h`` and ``sigma_hat^2 k / h^2`` close to ``cfl_ratio``."""
        n = max(2, int(round(x_len / h)))
        h_eff = x_len / n
        m = max(1, int(round(sigma_hat**2 * t_mat / (cfl_ratio * h_eff**2))))
        return cls(x_len=x_len, n_space=n, m_time=m, t_mat=t_mat)

    @property
    def h(self) -> float:
        return self.x_len / self.n_space

    @property
    def k(self) -> float:
        return self.t_mat / self.m_time

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.n_space + 1) * self.h
        x.setflags(write=False)
        return x

    @cached_property
    def exp_neg_x(self) -> np.ndarray:
        return np.exp(-self.x)

    @cached_property
    def taus(self) -> np.ndarray:
        return np.arange(self.m_time + 1) * self.k

    def check_market(self, market: MarketParams) -> None:
        if market.t_mat != self.t_mat:
            raise ValueError(f"grid maturity {self.t_mat} differs from market maturity {market.t_mat}")
        if not self.x_len > market.log_jump:
            raise ValueError("x_len must exceed log(r/q) so the initial jump lies inside the domain")


@dataclass
class PortfolioState:
    """``Pi`` on the spatial grid together with ``rho`` at time level ``j_index``."""

    pi: np.ndarray
    rho: float
    j_index: int = 0
    tau: float = 0.0

    def check(self, e_strike: float, atol: float = 0.0) -> list[str]:
        """Return the violated invariants (empty when the state is clean)."""
        issues = []
        if self.pi[0] != -e_strike:
            issues.append(f"pi[0]={self.pi[0]!r} != -E")
        if self.pi[-1] != 0.0:
            issues.append(f"pi[n]={self.pi[-1]!r} != 0")
        if self.pi.min() < -e_strike - atol or self.pi.max() > atol:
            issues.append("pi leaves [-E, 0]")
        if self.rho < e_strike:
            issues.append(f"rho={self.rho!r} below strike")
        return issues


class BoundaryCurve:
    """Sampled free boundary ``rho(tau_j)``.

    Parameters
    ----------
    taus, rhos : array_like
        Time-to-expiry nodes (increasing, starting at 0) and boundary values.
    market : MarketParams, optional
    model : str
        Tag naming the volatility model or method that produced the curve.
    """

    def __init__(self, taus, rhos, market: MarketParams | None = None, model: str = ""):
        self.taus = np.asarray(taus, dtype=float)
        self.rhos = np.asarray(rhos, dtype=float)
        if self.taus.shape != self.rhos.shape or self.taus.ndim != 1:
            raise ValueError("taus and rhos must be 1-d arrays of equal length")
        if self.taus.size and np.any(np.diff(self.taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        self.market = market
        self.model = model

    def __len__(self):
        return self.taus.size

    def __repr__(self):
        end = f", rho(T)={self.rhos[-1]:.6g}" if len(self) else ""
        return f"BoundaryCurve(model={self.model!r}, nodes={len(self)}{end})"

    @property
    def final(self) -> float:
        return float(self.rhos[-1])

    def __call__(self, tau):
        """Evaluate by linear interpolation in ``sqrt(tau)``.

        The boundary behaves like ``rho(0) + O(sqrt(tau))``, so it is nearly
        linear in that variable; the interpolant is monotone whenever the
        samples are.
        """
        return np.interp(np.sqrt(tau), np.sqrt(self.taus), self.rhos)

    def is_nondecreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.rhos) >= -tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "rho"])
            for t, r in zip(self.taus, self.rhos):
                w.writerow([CSV_FLOAT.format(t), CSV_FLOAT.format(r)])

    @classmethod
    def from_csv(cls, path, market: MarketParams | None = None, model: str = "") -> "BoundaryCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], market=market, model=model)


class PriceQuote(NamedTuple):
    value: float
    exercised: bool


def initial_state(market: MarketParams, grid: Grid) -> PortfolioState:
    """Portfolio at expiry: ``-E`` strictly below ``log(r/q)``, zero elsewhere."""
    grid.check_market(market)
    pi = np.where(grid.x < market.log_jump, -market.e_strike, 0.0)
    pi[0] = -market.e_strike
    pi[-1] = 0.0
    return PortfolioState(pi=pi, rho=market.rho0, j_index=0, tau=0.0)


def to_asset_price(x, rho: float):
    """Map the log coordinate back to the asset price, ``S = rho e^(-x)``."""
    return rho * np.exp(-np.asarray(x, dtype=float)) if np.ndim(x) else rho * math.exp(-x)


def reconstruct_price(state: PortfolioState, s_query: float, market: MarketParams, grid: Grid) -> float:
    """Call value ``V(S, T - tau)`` in the continuation region.

    Uses ``V = (S/rho) (rho - E + int_0^{log(rho/S)} e^x Pi(x) dx)`` with the
    trapezoid rule on grid cells and the linear interpolant of ``Pi`` on the
    fractional last cell.

    Raises
    ------
    OutOfRegionError
        If ``s_query > rho`` (the exercise region).
    """
    rho = state.rho
    if not s_query > 0:
        raise ValueError("asset price must be positive")
    if s_query > rho:
        raise OutOfRegionError(f"S={s_query} lies above the free boundary rho={rho}")
    upper = math.log(rho / s_query)
    if upper > grid.x_len:
        # Pi vanishes beyond the truncated domain
        upper = grid.x_len
    x, pi, h = grid.x, state.pi, grid.h
    f = np.exp(x) * pi
    i_full = min(int(upper / h), grid.n_space)
    while i_full > 0 and x[i_full] > upper:
        i_full -= 1
    integral = h * (0.5 * f[0] + f[1:i_full].sum() + 0.5 * f[i_full]) if i_full > 0 else 0.0
    frac = upper - x[i_full]
    if frac > 0.0 and i_full < grid.n_space:
        pi_up = pi[i_full] + (pi[i_full + 1] - pi[i_full]) * frac / h
        integral += 0.5 * frac * (f[i_full] + math.exp(upper) * pi_up)
    return s_query / rho * (rho - market.e_strike + integral)


def option_price(state: PortfolioState, s_query: float, market: MarketParams, grid: Grid) -> PriceQuote:
    """Call value anywhere: the exercise payoff above the boundary, the integral formula below."""
    if s_query > state.rho:
        return PriceQuote(s_query - market.e_strike, True)
    return PriceQuote(reconstruct_price(state, s_query, market, grid), False)


def write_snapshots_csv(path, snapshots: Iterable[PortfolioState], grid: Grid) -> None:
    """Long-format CSV ``tau,x,pi`` with one row per grid node and stored level."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "x", "pi"])
        for st in snapshots:
            t = CSV_FLOAT.format(st.tau)
            for xi, pv in zip(grid.x, st.pi):
                w.writerow([t, CSV_FLOAT.format(xi), CSV_FLOAT.format(pv)])
