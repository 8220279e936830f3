"""Reference boundary for constant volatility from a weakly singular integral equation.

For ``sigma = sigma_hat`` the boundary solves

    rho(tau) = rE/q * (1 + B(tau) + 1/sqrt(2 pi) int_0^tau K(tau, s) ds)

with an explicit boundary term ``B`` and a kernel carrying a
``(tau - s)^(-1/2)`` singularity.  Between nodes the boundary is taken linear
in ``sqrt(s)``, which matches its square-root onset at ``tau = 0`` and keeps
the discretization causal: the value at node ``j`` only depends on nodes
``0..j``.  Quadrature is Gauss-Legendre on every grid cell after the
substitution ``s = tau - u^2`` (which absorbs the singular factor) or, on
the first cell, ``s = v^2`` (which absorbs the square-root onset).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BoundaryError, NonConvergenceError
from .landau import BoundaryCurve, MarketParams

__all__ = [
    "IntegralGrid",
    "a_kernel",
    "integral_rhs",
    "fixed_point_residuals",
    "solve_integral_equation",
    "METHODS",
]

METHODS = ("march", "picard")
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class QuadratureError(BoundaryError, FloatingPointError):
    """Non-finite value met while evaluating the integral equation."""


@dataclass(frozen=True, eq=False)
class IntegralGrid:
    """Time nodes ``0 = tau_0 < ... < tau_M`` and Gauss points per cell."""

    taus: np.ndarray
    quad_nodes_per_panel: int = 8

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        if taus.ndim != 1 or taus.size < 2:
            raise ValueError("need at least two time nodes")
        if taus[0] != 0.0:
            raise ValueError("first node must be tau = 0")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        if self.quad_nodes_per_panel < 1:
            raise ValueError("quad_nodes_per_panel must be >= 1")
        object.__setattr__(self, "taus", taus)

    @classmethod
    def uniform(cls, t_mat: float, m: int = 200, quad_nodes_per_panel: int = 8) -> "IntegralGrid":
        return cls(np.linspace(0.0, t_mat, m + 1), quad_nodes_per_panel)

    @classmethod
    def graded(cls, t_mat: float, m: int = 800, quad_nodes_per_panel: int = 8) -> "IntegralGrid":
        """Nodes uniform in ``sqrt(tau)``, i.e. ``tau_j = T (j/m)^2``."""
        return cls(t_mat * np.linspace(0.0, 1.0, m + 1) ** 2, quad_nodes_per_panel)

    @property
    def m(self) -> int:
        return self.taus.size - 1


def a_kernel(rho, tau: float, s, market: MarketParams, sigma_hat: float):
    """``A_{tau,s} = log rho(tau) - log rho(s) + (r - q - sigma_hat^2/2)(tau - s)``.

    ``rho`` is any callable boundary, e.g. a :class:`BoundaryCurve`.
    """
    drift = market.r_rate - market.q_div - 0.5 * sigma_hat**2
    return np.log(rho(tau)) - np.log(rho(s)) + drift * (tau - np.asarray(s, dtype=float))


@dataclass(frozen=True)
class _Rule:
    x: np.ndarray
    w: np.ndarray


def _gauss(n: int) -> _Rule:
    x, w = np.polynomial.legendre.leggauss(n)
    return _Rule(0.5 * (x + 1.0), 0.5 * w)


def _rhs_at_last(tv: np.ndarray, rv: np.ndarray, market: MarketParams, sigma_hat: float, rule: _Rule) -> float:
    """Right-hand side at ``tau = tv[-1]`` for the boundary sampled as ``(tv, rv)``."""
    r, q, e = market.r_rate, market.q_div, market.e_strike
    sig2 = sigma_hat * sigma_hat
    drift = r - q - 0.5 * sig2
    tau = tv[-1]
    rho_t = rv[-1]
    sq = np.sqrt(tv)
    sq_t = sq[-1]
    ncell = tv.size - 1

    # per-cell linear law in sqrt(s): rho = rv[i] + slope_i (sqrt(s) - sq[i])
    slopes = np.diff(rv) / np.diff(sq)

    # cells 1..ncell-1 (and cell 0 when it is not also the last one) use u = sqrt(tau - s)
    u_lo = np.sqrt(np.maximum(tau - tv[2:], 0.0)) if ncell > 1 else np.empty(0)
    u_hi = np.sqrt(tau - tv[1:-1]) if ncell > 1 else np.empty(0)
    cell_u = np.arange(1, ncell)
    pieces_s, pieces_w, pieces_cell = [], [], []
    if ncell > 1:
        du = u_hi - u_lo
        u = (u_lo[:, None] + du[:, None] * rule.x).ravel()
        pieces_s.append(tau - u * u)
        pieces_w.append((2.0 * du[:, None] * rule.w).ravel())
        pieces_cell.append(np.repeat(cell_u, rule.x.size))
        v_top = sq[1]
        s_split = None
    else:
        # single cell: lower half in v = sqrt(s), upper half in u
        s_split = 0.5 * tau
        v_top = math.sqrt(s_split)
        u_top = math.sqrt(tau - s_split)
        u = u_top * rule.x
        pieces_s.append(tau - u * u)
        pieces_w.append(2.0 * u_top * rule.w)
        pieces_cell.append(np.zeros(rule.x.size, dtype=int))
    v = v_top * rule.x
    s_v = v * v
    pieces_s.append(s_v)
    pieces_w.append(2.0 * v * v_top * rule.w / np.sqrt(tau - s_v))
    pieces_cell.append(np.zeros(rule.x.size, dtype=int))

    s = np.concatenate(pieces_s)
    w = np.concatenate(pieces_w)
    cell = np.concatenate(pieces_cell)
    sqrt_s = np.sqrt(s)
    rho_s = rv[cell] + slopes[cell] * (sqrt_s - sq[cell])
    d = tau - s

    # A/(tau - s) without cancellation: inside the last cell rho(tau) - rho(s)
    # equals slope * d / (sqrt(tau) + sqrt(s)) exactly
    last = cell == ncell - 1
    diff_rho = np.where(last, slopes[cell] * d / (sq_t + sqrt_s), rho_t - rho_s)
    ratio = diff_rho / rho_s
    small = np.abs(ratio) < 1e-8
    log_ratio = np.where(small, ratio * (1.0 - 0.5 * ratio), np.log1p(np.where(small, 0.0, ratio)))
    with np.errstate(divide="ignore", invalid="ignore"):
        a_over_d = np.where(
            d < 1e-12,
            slopes[cell] / (2.0 * sq_t * rho_t) + drift,
            log_ratio / d + drift,
        )
    a = a_over_d * d
    kernel = (sigma_hat + (1.0 - q * rho_s / (r * e)) * a_over_d / sigma_hat) * np.exp(
        -r * d - a * a_over_d / (2.0 * sig2)
    )
    integral = float(np.dot(kernel, w))

    a0 = math.log(rho_t) - math.log(rv[0]) + drift * tau
    bterm = sigma_hat / (r * math.sqrt(2.0 * math.pi * tau)) * math.exp(
        -r * tau - (a0 + math.log(r / q)) ** 2 / (2.0 * sig2 * tau)
    )
    out = market.rho0 * (1.0 + bterm + integral / _SQRT_2PI)
    if not math.isfinite(out):
        raise QuadratureError(f"non-finite right-hand side at tau={tau:.6g}")
    return out


def integral_rhs(
    rho_curve: BoundaryCurve, tau: float, market: MarketParams, sigma_hat: float, quad_nodes: int = 8
) -> float:
    """Evaluate the right-hand side of the integral equation at ``tau``.

    ``rho_curve`` must cover ``[0, tau]``; off-node values use the curve's
    interpolation (linear in ``sqrt(tau)``).
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    taus, rhos = rho_curve.taus, rho_curve.rhos
    if taus[0] != 0.0 or tau > taus[-1] * (1 + 1e-14):
        raise ValueError("rho_curve must be defined on [0, tau]")
    j = int(np.searchsorted(taus, tau, side="left"))
    if j < taus.size and taus[j] == tau:
        tv, rv = taus[: j + 1], rhos[: j + 1]
    else:
        tv = np.append(taus[:j], tau)
        rv = np.append(rhos[:j], float(rho_curve(tau)))
    return _rhs_at_last(tv, rv, market, sigma_hat, _gauss(quad_nodes))


def fixed_point_residuals(
    curve: BoundaryCurve, market: MarketParams, sigma_hat: float, quad_nodes: int = 8
) -> np.ndarray:
    """``|rhs(curve, tau_j) - rho_j|`` for every node ``j >= 1``."""
    rule = _gauss(quad_nodes)
    t, r = curve.taus, curve.rhos
    return np.array(
        [abs(_rhs_at_last(t[: j + 1], r[: j + 1], market, sigma_hat, rule) - r[j]) for j in range(1, t.size)]
    )


def _march(taus, market, sigma_hat, rule, tol, max_iter):
    rv = np.empty_like(taus)
    rv[0] = market.rho0
    for j in range(1, taus.size):
        tv = taus[: j + 1]

        def g(x, j=j, tv=tv):
            rv[j] = x
            return _rhs_at_last(tv, rv[: j + 1], market, sigma_hat, rule) - x

        lo = rv[j - 1]
        g_lo = g(lo)
        width = max(1e-3 * lo, 1e-12)
        if g_lo < 0.0:
            hi, lo = lo, lo - width
            while g(lo) < 0.0:
                width *= 2.0
                lo = rv[j - 1] - width
                if lo <= 0:
                    raise NonConvergenceError(f"cannot bracket boundary at tau={tv[-1]:.6g}", abs(g_lo), 0)
        else:
            hi = lo + width
            while g(hi) > 0.0:
                width *= 2.0
                hi = rv[j - 1] + width
                if width > 1e6 * lo:
                    raise NonConvergenceError(f"cannot bracket boundary at tau={tv[-1]:.6g}", g_lo, 0)
        rv[j] = brentq(g, lo, hi, xtol=min(tol, 1e-12) * 1e-2, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
    return rv


def _picard(taus, market, sigma_hat, rule, tol, max_iter, damping):
    rv = np.full_like(taus, market.rho0)
    res = math.inf
    for it in range(1, max_iter + 1):
        new = rv.copy()
        for j in range(1, taus.size):
            new[j] = _rhs_at_last(taus[: j + 1], rv[: j + 1], market, sigma_hat, rule)
        res = float(np.max(np.abs(new - rv)))
        rv = rv + damping * (new - rv)
        if res < tol:
            return rv
    raise NonConvergenceError(
        f"Picard iteration stalled after {max_iter} sweeps (residual {res:.3g})",
        res,
        max_iter,
        partial=BoundaryCurve(taus, rv, market, "integral"),
    )


def solve_integral_equation(
    market: MarketParams,
    sigma_hat: float,
    igrid: IntegralGrid | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    method: str = "march",
    damping: float = 1.0,
) -> BoundaryCurve:
    """Solve the integral equation on ``igrid`` (default: 200 uniform steps).

    ``method="march"`` solves node after node, each node by a bracketed scalar
    root search; this is the exact solution of the discrete fixed-point
    system because the discretization is causal.  ``method="picard"`` runs
    successive substitution over all nodes with optional ``damping``; it
    needs strong damping and still diverges once the grid is fine (the
    singular kernel amplifies high-frequency errors).

    Raises
    ------
    NonConvergenceError
        If the returned curve would violate the fixed-point tolerance.
    """
    if not sigma_hat > 0:
        raise ValueError("sigma_hat must be positive")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    igrid = igrid or IntegralGrid.uniform(market.t_mat)
    if abs(igrid.taus[-1] - market.t_mat) > 1e-12 * market.t_mat:
        raise ValueError("integral grid must end at the maturity")
    rule = _gauss(igrid.quad_nodes_per_panel)
    taus = igrid.taus
    if method == "march":
        rv = _march(taus, market, sigma_hat, rule, tol, max_iter)
    else:
        rv = _picard(taus, market, sigma_hat, rule, tol, max_iter, damping)
    curve = BoundaryCurve(taus, rv, market, "integral")
    res = fixed_point_residuals(curve, market, sigma_hat, igrid.quad_nodes_per_panel)
    if res.size and res.max() >= tol:
        raise NonConvergenceError(
            f"fixed-point residual {res.max():.3g} exceeds tol", float(res.max()), max_iter, partial=curve
        )
    return curve
