"""Curve distances, convergence orders and the refinement / parameter studies."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

from .errors import BoundaryError
from .integral_benchmark import IntegralGrid, solve_integral_equation
from .landau import CSV_FLOAT, BoundaryCurve, Grid, MarketParams
from .splitting_solver import SolverControls, solve
from .volatility import RAPM, BarlesSoner, Constant, VolatilitySpec

__all__ = [
    "DistanceReport",
    "curve_distance",
    "eoc",
    "param_order",
    "ConvergenceRow",
    "ConvergenceReport",
    "convergence_study",
    "SweepRow",
    "SweepReport",
    "parameter_sweep",
    "variant_orders",
    "sweep_model",
    "SWEEP_FAMILIES",
    "L2_VARIANTS",
]

SWEEP_FAMILIES = ("rapm", "barles-soner")
L2_VARIANTS = ("continuous", "discrete", "grid")
GRID_SAMPLES = 100


@dataclass(frozen=True)
class DistanceReport:
    """Distances between two boundary curves.

    ``l_2`` is the trapezoid approximation of ``(int_0^T (a-b)^2 dtau)^(1/2)``;
    ``l2_discrete`` is the plain root-sum-square over the nodes.
    ``l2_grid`` is ``(h sum_j (a-b)(tau_j)^2)^(1/2)`` over ``GRID_SAMPLES``
    equispaced times ``tau_j = j T / GRID_SAMPLES``, weighted by the spatial
    step ``h`` of the solver run rather than by the time spacing.  It is not
    a norm in ``tau`` (it scales like ``sqrt(h)``) but it is the quantity
    whose refinement orders sit half an order above the sup-norm ones, as in
    published convergence tables for this problem.  NaN when no ``h`` was
    given.
    """

    l_inf: float
    l_2: float
    l2_discrete: float
    l2_grid: float = math.nan

    def l2(self, variant: str = "continuous") -> float:
        if variant not in L2_VARIANTS:
            raise ValueError(f"L2 variant must be one of {L2_VARIANTS}")
        return {"continuous": self.l_2, "discrete": self.l2_discrete, "grid": self.l2_grid}[variant]


def curve_distance(a: BoundaryCurve, b: BoundaryCurve, h: float | None = None) -> DistanceReport:
    """Distance of ``b`` from ``a`` measured on the nodes of ``a``.

    ``b`` is carried over to those nodes by monotone (PCHIP) interpolation in
    ``sqrt(tau)``; only nodes of ``a`` inside the range of ``b`` count.
    ``h`` (spatial step behind ``a``) enables the ``l2_grid`` variant, which
    samples the difference linearly in ``sqrt(tau)``.
    """
    if a.market is not None and b.market is not None and a.market != b.market:
        raise ValueError("curves belong to different market parameters")
    lo, hi = b.taus[0], b.taus[-1]
    slack = 1e-12 * max(hi, 1.0)
    mask = (a.taus >= lo - slack) & (a.taus <= hi + slack)
    if mask.sum() < 2:
        raise ValueError("curves have (nearly) disjoint tau ranges")
    t = a.taus[mask]
    if a.taus.size == b.taus.size and np.array_equal(a.taus, b.taus):
        rb = b.rhos
    else:
        interp = PchipInterpolator(np.sqrt(b.taus), b.rhos, extrapolate=False)
        rb = interp(np.sqrt(np.clip(t, lo, hi)))
    d = a.rhos[mask] - rb
    l_inf = float(np.max(np.abs(d)))
    l_2 = math.sqrt(max(float(trapezoid(d * d, t)), 0.0))
    l2d = float(np.sqrt(np.sum(d * d)))
    l2g = math.nan
    if h is not None:
        ts = t[-1] * np.arange(1, GRID_SAMPLES + 1) / GRID_SAMPLES
        ds = np.interp(np.sqrt(ts), np.sqrt(t), d)
        l2g = math.sqrt(h * float(np.sum(ds * ds)))
    return DistanceReport(l_inf, l_2, l2d, l2g)


def _log_slopes(xs, ys, name: str) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError(f"{name}: need two equal-length sequences with at least two entries")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise ValueError(f"{name}: values must be positive")
    return np.diff(np.log(ys)) / np.diff(np.log(xs))


def eoc(hs: Sequence[float], errs: Sequence[float]) -> np.ndarray:
    """Experimental orders of convergence for consecutive pairs of mesh sizes."""
    if np.any(np.diff(np.asarray(hs, dtype=float)) >= 0):
        raise ValueError("eoc: mesh sizes must be strictly decreasing")
    return _log_slopes(hs, errs, "eoc")


def param_order(params: Sequence[float], dists: Sequence[float]) -> np.ndarray:
    """Log-log slopes ``alpha`` of distance against a model parameter."""
    if np.any(np.diff(np.asarray(params, dtype=float)) <= 0):
        raise ValueError("param_order: parameters must be strictly increasing")
    return _log_slopes(params, dists, "param_order")


def _run(args):
    market, spec, grid, controls = args
    try:
        res = solve(market, spec, grid, controls)
    except BoundaryError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return res.curve, None


def _map(tasks, jobs: int | None):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [_run(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run, tasks))


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else CSV_FLOAT.format(v)


def _slopes_with_gaps(xs, ys, fn):
    """Pairwise slopes on consecutive rows; NaN where either row failed."""
    out = [math.nan] * len(xs)
    for i in range(1, len(xs)):
        if ys[i] is not None and ys[i - 1] is not None and ys[i] > 0 and ys[i - 1] > 0:
            out[i] = float(fn([xs[i - 1], xs[i]], [ys[i - 1], ys[i]])[0])
    return out


@dataclass
class ConvergenceRow:
    h: float
    grid: Grid
    distance: DistanceReport | None
    rho_final: float | None
    eoc_linf: float = math.nan
    eoc_l2: float = math.nan
    error: str | None = None


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow]
    reference: BoundaryCurve
    l2_variant: str = "grid"
    curves: dict[float, BoundaryCurve] = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "err_linf", "eoc_linf", "err_l2", "eoc_l2"])
            for r in self.rows:
                d = r.distance
                w.writerow([
                    _fmt(r.h),
                    _fmt(d.l_inf if d else None),
                    _fmt(r.eoc_linf),
                    _fmt(d.l2(self.l2_variant) if d else None),
                    _fmt(r.eoc_l2),
                ])


def convergence_study(
    market: MarketParams,
    sigma_hat: float,
    h_list: Sequence[float],
    cfl_ratio: float = 0.5,
    controls: SolverControls = SolverControls(),
    reference: BoundaryCurve | None = None,
    x_len: float = 3.0,
    l2_variant: str = "grid",
    jobs: int | None = 1,
) -> ConvergenceReport:
    """Refinement study against the integral-equation boundary.

    For each ``h`` the time step follows ``sigma_hat^2 k / h^2 = cfl_ratio``.
    ``reference`` defaults to the integral-equation solution on 800 nodes
    graded like ``tau ~ j^2``.  The L2 column uses ``l2_variant`` (see
    :class:`DistanceReport`; every row keeps all variants).  A failing row
    keeps its error message and the remaining rows still run.
    """
    hs = [float(h) for h in h_list]
    if len(hs) < 1 or np.any(np.diff(hs) >= 0):
        raise ValueError("h_list must be strictly decreasing")
    if l2_variant not in L2_VARIANTS:
        raise ValueError(f"l2_variant must be one of {L2_VARIANTS}")
    if reference is None:
        reference = solve_integral_equation(market, sigma_hat, IntegralGrid.graded(market.t_mat, 800))
    spec = Constant(sigma_hat=sigma_hat)
    grids = [Grid.from_cfl(h, cfl_ratio, sigma_hat, market.t_mat, x_len) for h in hs]
    results = _map([(market, spec, g, controls) for g in grids], jobs)

    rows, curves = [], {}
    for h, g, (curve, err) in zip(hs, grids, results):
        if curve is None:
            rows.append(ConvergenceRow(h, g, None, None, error=err))
            continue
        curves[h] = curve
        rows.append(ConvergenceRow(h, g, curve_distance(curve, reference, g.h), curve.final))
    linf = [r.distance.l_inf if r.distance else None for r in rows]
    l2 = [r.distance.l2(l2_variant) if r.distance else None for r in rows]
    for r, a, b in zip(rows, _slopes_with_gaps(hs, linf, eoc), _slopes_with_gaps(hs, l2, eoc)):
        r.eoc_linf, r.eoc_l2 = a, b
    return ConvergenceReport(rows, reference, l2_variant, curves)


def variant_orders(report: ConvergenceReport, variant: str) -> list[float]:
    """Pairwise eoc of ``report`` recomputed for another L2 variant."""
    hs = [r.h for r in report.rows]
    vals = [r.distance.l2(variant) if r.distance else None for r in report.rows]
    return _slopes_with_gaps(hs, vals, eoc)[1:]


def sweep_model(family: str, param: float, sigma_hat: float, market: MarketParams, c_cost: float = 0.01) -> VolatilitySpec:
    """Model of a sweep family at one parameter value (``0`` gives constant volatility)."""
    if family == "rapm":
        return RAPM.from_costs(sigma_hat, c_cost, param) if param > 0 else Constant(sigma_hat=sigma_hat)
    if family == "barles-soner":
        return BarlesSoner(sigma_hat=sigma_hat, a=param, r=market.r_rate) if param > 0 else Constant(sigma_hat=sigma_hat)
    raise ValueError(f"sweep family must be one of {SWEEP_FAMILIES}")


@dataclass
class SweepRow:
    param: float
    distance: DistanceReport | None
    rho_final: float | None
    alpha_linf: float = math.nan
    alpha_l2: float = math.nan
    error: str | None = None


@dataclass
class SweepReport:
    family: str
    rows: list[SweepRow]
    reference: BoundaryCurve
    l2_variant: str = "continuous"
    curves: dict[float, BoundaryCurve] = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["param", "dist_linf", "alpha_linf", "dist_l2", "alpha_l2"])
            for r in self.rows:
                d = r.distance
                w.writerow([
                    _fmt(r.param),
                    _fmt(d.l_inf if d else None),
                    _fmt(r.alpha_linf),
                    _fmt(d.l2(self.l2_variant) if d else None),
                    _fmt(r.alpha_l2),
                ])

    def overall_slope(self, params_max: float | None = None) -> float:
        """Least-squares log-log slope of ``l_inf`` distance over the (optionally truncated) rows."""
        pts = [
            (r.param, r.distance.l_inf)
            for r in self.rows
            if r.distance and r.param > 0 and r.distance.l_inf > 0 and (params_max is None or r.param <= params_max)
        ]
        if len(pts) < 2:
            raise ValueError("need two successful rows for a slope")
        x, y = np.log(np.array(pts)).T
        return float(np.polyfit(x, y, 1)[0])


def parameter_sweep(
    market: MarketParams,
    grid: Grid,
    family: str,
    params: Sequence[float],
    sigma_hat: float = 0.2,
    c_cost: float = 0.01,
    controls: SolverControls = SolverControls(),
    l2_variant: str = "continuous",
    jobs: int | None = 1,
) -> SweepReport:
    """Distances of the boundaries of one model family from the constant-volatility boundary.

    ``family`` is ``"rapm"`` (parameter ``R`` at cost ``c_cost``) or
    ``"barles-soner"`` (risk aversion ``a``).  All runs share ``grid``.
    """
    ps = [float(p) for p in params]
    if not ps or any(p < 0 for p in ps) or np.any(np.diff(ps) <= 0):
        raise ValueError("parameters must be nonnegative and strictly increasing")
    if l2_variant not in L2_VARIANTS:
        raise ValueError(f"l2_variant must be one of {L2_VARIANTS}")
    specs = [sweep_model(family, p, sigma_hat, market, c_cost) for p in ps]
    tasks = [(market, Constant(sigma_hat=sigma_hat), grid, controls)]
    tasks += [(market, s, grid, controls) for s in specs]
    results = _map(tasks, jobs)
    reference, ref_err = results[0]
    if reference is None:
        raise BoundaryError(f"constant-volatility reference failed: {ref_err}")

    rows, curves = [], {0.0: reference}
    for p, (curve, err) in zip(ps, results[1:]):
        if curve is None:
            rows.append(SweepRow(p, None, None, error=err))
            continue
        curves[p] = curve
        rows.append(SweepRow(p, curve_distance(curve, reference, grid.h), curve.final))
    pos = [p if p > 0 else None for p in ps]
    linf = [r.distance.l_inf if r.distance and r.param > 0 else None for r in rows]
    l2 = [r.distance.l2(l2_variant) if r.distance and r.param > 0 else None for r in rows]
    xs = [p if p is not None else 1.0 for p in pos]
    for r, a, b in zip(rows, _slopes_with_gaps(xs, linf, param_order), _slopes_with_gaps(xs, l2, param_order)):
        r.alpha_linf, r.alpha_l2 = a, b
    return SweepReport(family, rows, reference, l2_variant, curves)
