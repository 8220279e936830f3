"""Operator-splitting time stepper for the transformed free boundary problem.

Each backward-Euler level is split into

* an exact transport step along characteristics (the convective part with
  the large coefficient ``b(tau) = rho'/rho + r - q``), and
* an implicit diffusion step, a tridiagonal linear system,

coupled with the algebraic boundary equation
``rho = rE/q + sigma^2(Pi_x(0), rho, tau) Pi_x(0) / (2q)``.
The three are solved together at every level by micro-iterations.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .errors import BoundaryError, NonConvergenceError, SingularSystemError, VolatilityDomainError
from .landau import BoundaryCurve, Grid, MarketParams, PortfolioState, initial_state
from .volatility import VolatilitySpec, margin_values, parabolicity_margin

__all__ = [
    "SolverControls",
    "TridiagonalSystem",
    "LevelStats",
    "SolveReport",
    "SolveResult",
    "transport_step",
    "assemble_diffusion",
    "thomas_solve",
    "update_boundary",
    "time_step",
    "resubstitution_residual",
    "solve",
]

log = logging.getLogger(__name__)

BOUNDARY_UPDATES = ("secant", "picard")


@dataclass(frozen=True)
class SolverControls:
    """Micro-iteration and bookkeeping settings.

    Parameters
    ----------
    micro_tol : float
        Stop once both the sup-norm change of ``Pi`` and the residual of the
        boundary equation fall below this value.
    max_micro : int
        Cap on micro-iterations per level.
    store_every : int or None
        Keep a ``Pi`` snapshot every this many levels (``None``: about 100
        snapshots per run).  The first and last levels are always kept.
    boundary_update : {"secant", "picard"}
        ``"picard"`` feeds the boundary equation straight back; ``"secant"``
        applies a secant (Wegstein) correction to the same update.
    relaxation : float
        Under-relaxation factor in ``(0, 1]`` applied to each boundary update.
    """

    micro_tol: float = 1e-7
    max_micro: int = 50
    store_every: int | None = None
    boundary_update: str = "secant"
    relaxation: float = 1.0

    def __post_init__(self):
        if not self.micro_tol > 0:
            raise ValueError("micro_tol must be positive")
        if self.max_micro < 1:
            raise ValueError("max_micro must be >= 1")
        if self.store_every is not None and self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        if self.boundary_update not in BOUNDARY_UPDATES:
            raise ValueError(f"boundary_update must be one of {BOUNDARY_UPDATES}")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class TridiagonalSystem:
    """Rows ``i = 1..n-1`` of ``alpha_i Pi_{i-1} + beta_i Pi_i + gamma_i Pi_{i+1} = rhs_i``.

    ``alpha[0]`` and ``gamma[-1]`` multiply the Dirichlet values and are
    already folded into ``rhs``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    rhs: np.ndarray

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Product of the interior matrix with ``v`` (Dirichlet couplings excluded)."""
        out = self.beta * v
        out[1:] += self.alpha[1:] * v[:-1]
        out[:-1] += self.gamma[:-1] * v[1:]
        return out

    def to_dense(self) -> np.ndarray:
        n = self.beta.size
        a = np.diag(self.beta)
        a[np.arange(1, n), np.arange(n - 1)] = self.alpha[1:]
        a[np.arange(n - 1), np.arange(1, n)] = self.gamma[:-1]
        return a

    def diagonally_dominant(self) -> bool:
        off = np.abs(self.alpha) + np.abs(self.gamma)
        off[0] -= abs(self.alpha[0])
        off[-1] -= abs(self.gamma[-1])
        return bool(np.all(np.abs(self.beta) > off))


@dataclass
class LevelStats:
    micro: int
    residual: float
    far_field: int = 0


@dataclass
class SolveReport:
    """Per-level diagnostics of a run (arrays have one entry per time level)."""

    micro_counts: np.ndarray
    residuals: np.ndarray
    margin_taus: list = field(default_factory=list)
    margins: list = field(default_factory=list)
    far_field_flags: int = 0
    suspicious_levels: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def mean_micro(self) -> float:
        return float(np.mean(self.micro_counts)) if self.micro_counts.size else 0.0

    @property
    def max_micro(self) -> int:
        return int(np.max(self.micro_counts)) if self.micro_counts.size else 0


@dataclass
class SolveResult:
    curve: BoundaryCurve
    snapshots: list
    report: SolveReport
    final_state: PortfolioState


# --------------------------------------------------------------------------- #
#  Building blocks
# --------------------------------------------------------------------------- #


def _shift(rho_prev: float, rho_new: float, market: MarketParams, k: float) -> float:
    return math.log(rho_new) - math.log(rho_prev) + (market.r_rate - market.q_div) * k


def transport_step(prev: PortfolioState, rho_new: float, market: MarketParams, grid: Grid) -> np.ndarray:
    """Convective half step: ``Pi(x_i) <- Pi_prev(xi_i)`` along characteristics.

    ``xi_i = x_i - log(rho_new) + log(rho_prev) - (r - q) k``; the previous
    profile is interpolated linearly, nodes with ``xi_i <= 0`` receive the
    inflow value ``-E`` and feet beyond ``x = L`` receive the far-field 0.
    """
    if not rho_new > 0:
        raise ValueError("rho_new must be positive")
    xi = grid.x - _shift(prev.rho, rho_new, market, grid.k)
    out = np.interp(xi, grid.x, prev.pi, right=0.0)
    out[xi <= 0.0] = -market.e_strike
    return out


def _far_field_count(prev_rho: float, rho_new: float, market: MarketParams, grid: Grid) -> int:
    s = _shift(prev_rho, rho_new, market, grid.k)
    if s >= 0.0:
        return 0
    return int(np.count_nonzero(grid.x - s > grid.x_len))


def _sigma2_nodes(pi: np.ndarray, rho: float, tau: float, grid: Grid, spec: VolatilitySpec) -> np.ndarray:
    p = np.diff(pi) / grid.h
    xi = rho * grid.exp_neg_x[:-1]
    try:
        return np.asarray(spec.sigma_squared(p, xi, tau), dtype=float)
    except VolatilityDomainError as exc:
        for i in range(p.size):
            try:
                spec.sigma_squared(p[i], xi[i], tau)
            except VolatilityDomainError:
                raise type(exc)(f"{exc} (spatial node {i}, p={p[i]:.6g}, xi={xi[i]:.6g})") from exc
        raise


def assemble_diffusion(
    pi_iter: np.ndarray,
    pi_half: np.ndarray,
    rho_iter: float,
    tau_j: float,
    grid: Grid,
    market: MarketParams,
    spec: VolatilitySpec,
) -> TridiagonalSystem:
    """Tridiagonal system of the diffusion step.

    Node volatilities ``sigma_i^2 = sigma^2((Pi_{i+1} - Pi_i)/h, rho e^(-x_i), tau)``
    come from ``pi_iter``; the right-hand side is ``pi_half`` with the
    Dirichlet data moved over.
    """
    h, k = grid.h, grid.k
    s2 = _sigma2_nodes(pi_iter, rho_iter, tau_j, grid, spec)
    if s2.ndim == 0:
        s2 = np.full(grid.n_space, float(s2))
    s2_left = s2[:-1]
    s2_here = s2[1:]
    diff = k / (2.0 * h * h)
    conv = k / (4.0 * h)
    alpha = -diff * s2_left + conv * s2_here
    gamma = -diff * s2_here - conv * s2_here
    beta = 1.0 + market.r_rate * k - (alpha + gamma)
    rhs = pi_half[1:-1].copy()
    rhs[0] -= alpha[0] * pi_half[0]
    rhs[-1] -= gamma[-1] * pi_half[-1]
    return TridiagonalSystem(alpha=alpha, beta=beta, gamma=gamma, rhs=rhs)


@njit(cache=True)
def _thomas(a, b, c, d):
    n = d.size
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)
    if b[0] == 0.0:
        return x, 0
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if piv == 0.0:
            return x, i
        cp[i] = c[i] / piv
        dp[i] = (d[i] - a[i] * dp[i - 1]) / piv
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x, -1


def thomas_solve(sys: TridiagonalSystem) -> np.ndarray:
    """Forward elimination / back substitution for ``sys``.

    Raises
    ------
    SingularSystemError
        On a zero pivot; ``row`` is the 0-based interior row index.
    """
    x, bad = _thomas(
        np.ascontiguousarray(sys.alpha, dtype=np.float64),
        np.ascontiguousarray(sys.beta, dtype=np.float64),
        np.ascontiguousarray(sys.gamma, dtype=np.float64),
        np.ascontiguousarray(sys.rhs, dtype=np.float64),
    )
    if bad >= 0:
        raise SingularSystemError(int(bad))
    return x


def update_boundary(
    pi_iter: np.ndarray,
    rho_prev_iter: float,
    tau_j: float,
    grid: Grid,
    market: MarketParams,
    spec: VolatilitySpec,
) -> float:
    """Right-hand side of the discrete boundary equation.

    ``rE/q + sigma^2(s, rho, tau) s / (2q)`` with the one-sided slope
    ``s = (Pi_1 - Pi_0)/h``.
    """
    slope = (pi_iter[1] - pi_iter[0]) / grid.h
    s2 = float(spec.sigma_squared(slope, rho_prev_iter, tau_j))
    return market.rho0 + s2 * slope / (2.0 * market.q_div)


def _diffusion_solve(pi_iter, pi_half, rho, tau, grid, market, spec):
    sys = assemble_diffusion(pi_iter, pi_half, rho, tau, grid, market, spec)
    out = np.empty_like(pi_half)
    out[0] = -market.e_strike
    out[-1] = 0.0
    out[1:-1] = thomas_solve(sys)
    return out


def time_step(
    prev: PortfolioState,
    tau_j: float,
    grid: Grid,
    market: MarketParams,
    spec: VolatilitySpec,
    controls: SolverControls = SolverControls(),
) -> tuple[PortfolioState, LevelStats]:
    """Advance one level by micro-iterations started from the previous level.

    Each sweep updates the boundary from the current portfolio, transports
    the previous level with the new boundary, and solves the diffusion system
    with coefficients frozen at the current iterate.  Plain substitution of
    the boundary update oscillates with growing amplitude once
    ``(rho - rE/q) / (rho h)`` exceeds one, which is the regime of every
    practical grid; the default ``"secant"`` update corrects it with the
    secant slope of the boundary map over the last two sweeps.

    Raises
    ------
    NonConvergenceError
        If ``controls.max_micro`` sweeps do not reach ``controls.micro_tol``.
    """
    tol = controls.micro_tol
    secant = controls.boundary_update == "secant"
    omega = controls.relaxation

    pi = prev.pi
    rho = prev.rho
    f_cur = update_boundary(pi, rho, tau_j, grid, market, spec)
    f_old = rho_old = None
    change = math.inf
    for it in range(1, controls.max_micro + 1):
        step = f_cur - rho
        if secant and rho_old is not None and rho != rho_old:
            slope = (f_cur - f_old) / (rho - rho_old)
            if abs(1.0 - slope) > 1e-3:
                step /= 1.0 - slope
        rho_new = rho + omega * step
        if not rho_new > 0:
            raise NonConvergenceError(
                f"boundary iterate became non-positive ({rho_new:.6g})", abs(step), it
            )
        half = transport_step(prev, rho_new, market, grid)
        pi_new = _diffusion_solve(pi, half, rho_new, tau_j, grid, market, spec)
        f_new = update_boundary(pi_new, rho_new, tau_j, grid, market, spec)
        change = max(float(np.max(np.abs(pi_new - pi))), abs(f_new - rho_new))
        f_old, rho_old = f_cur, rho
        pi, rho, f_cur = pi_new, rho_new, f_new
        if change < tol:
            far = _far_field_count(prev.rho, rho, market, grid)
            state = PortfolioState(pi=pi, rho=rho, j_index=prev.j_index + 1, tau=tau_j)
            return state, LevelStats(micro=it, residual=change, far_field=far)
    raise NonConvergenceError(
        f"micro-iterations did not converge at tau={tau_j:.6g} (residual {change:.3g})",
        change,
        controls.max_micro,
    )


def resubstitution_residual(
    prev: PortfolioState, state: PortfolioState, grid: Grid, market: MarketParams, spec: VolatilitySpec
) -> float:
    """How well a converged level satisfies the coupled discrete system.

    Returns the larger of ``|F(Pi, rho) - rho|`` and
    ``||A(Pi, rho) Pi - T(Pi_prev, rho)||_inf`` over interior rows.
    """
    rho_res = abs(update_boundary(state.pi, state.rho, state.tau, grid, market, spec) - state.rho)
    half = transport_step(prev, state.rho, market, grid)
    sys = assemble_diffusion(state.pi, half, state.rho, state.tau, grid, market, spec)
    pi_res = float(np.max(np.abs(sys.matvec(state.pi[1:-1]) - sys.rhs)))
    return max(rho_res, pi_res)


def _margin_sample(state: PortfolioState, grid: Grid, spec: VolatilitySpec) -> float:
    """Parabolicity margin over the slopes actually present in ``state``."""
    if spec.is_linear:
        return spec.sigma_hat**2
    p = np.diff(state.pi) / grid.h
    xi = state.rho * grid.exp_neg_x[:-1]
    return float(np.min(margin_values(spec, p, xi, state.tau)))


def solve(
    market: MarketParams,
    spec: VolatilitySpec,
    grid: Grid,
    controls: SolverControls = SolverControls(),
    progress: Callable[[int, int], None] | None = None,
) -> SolveResult:
    """Run all ``grid.m_time`` levels starting from the expiry data.

    Errors raised inside a level are re-raised with ``level`` and
    ``partial`` (the boundary computed so far) attached.
    """
    t0 = time.perf_counter()
    state = initial_state(market, grid)
    m = grid.m_time
    store_every = controls.store_every or max(1, m // 100)

    margin0 = parabolicity_margin(spec, (0.0, 2.0 * market.e_strike), market.rho0, 0.0)
    if margin0 <= 0:
        warnings.warn(f"parabolicity margin {margin0:.3g} <= 0 on the expected slope range", RuntimeWarning)

    rhos = np.empty(m + 1)
    rhos[0] = state.rho
    micro = np.zeros(m, dtype=int)
    resid = np.zeros(m)
    report = SolveReport(micro_counts=micro, residuals=resid)
    snapshots = [state]
    taus = grid.taus

    for j in range(1, m + 1):
        try:
            new, stats = time_step(state, float(taus[j]), grid, market, spec, controls)
        except BoundaryError as exc:
            exc.level = j
            exc.partial = BoundaryCurve(taus[:j], rhos[:j].copy(), market, spec.name)
            raise
        micro[j - 1] = stats.micro
        resid[j - 1] = stats.residual
        report.far_field_flags += stats.far_field
        if new.rho < market.e_strike:
            report.suspicious_levels.append(j)
        rhos[j] = new.rho
        state = new
        if j % store_every == 0 or j == m:
            snapshots.append(state)
            report.margin_taus.append(state.tau)
            report.margins.append(_margin_sample(state, grid, spec))
        if progress is not None:
            progress(j, m)

    report.wall_time = time.perf_counter() - t0
    if report.far_field_flags:
        log.warning("%d transport feet fell beyond x=L", report.far_field_flags)
    if report.margins and min(report.margins) <= 0:
        warnings.warn("parabolicity margin became non-positive during the run", RuntimeWarning)
    curve = BoundaryCurve(taus.copy(), rhos, market, spec.name)
    return SolveResult(curve=curve, snapshots=snapshots, report=report, final_state=state)
