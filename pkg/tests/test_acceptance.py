"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records its individual checks in ``acceptance_log`` and fails if
any of them misses; the terminal summary prints one line per criterion.
Reference numbers quoted below are the published table values.
"""

import math

import numpy as np
import pytest

from acceptance_log import Checks
from exercise_boundary.analysis import (
    convergence_study,
    curve_distance,
    eoc,
    param_order,
    parameter_sweep,
    variant_orders,
)
from exercise_boundary.integral_benchmark import IntegralGrid, solve_integral_equation
from exercise_boundary.landau import Grid, MarketParams, PortfolioState, initial_state
from exercise_boundary.splitting_solver import (
    SolverControls,
    TridiagonalSystem,
    resubstitution_residual,
    solve,
    thomas_solve,
    transport_step,
)
from exercise_boundary.volatility import (
    RAPM,
    BarlesSoner,
    Constant,
    FreyStremme,
    Leland,
    build_psi_table,
    default_psi_table,
    parabolicity_margin,
)

MARKET = MarketParams()
SIG = 0.2
TOL = SolverControls().micro_tol

PUBLISHED_RAPM = {1: 0.0601, 2: 0.0754, 5: 0.102, 10: 0.128, 20: 0.16, 40: 0.2, 100: 0.268}
PUBLISHED_BS = {0.01: 0.156, 0.02: 0.25, 0.05: 0.472, 0.1: 0.793, 0.2: 1.52, 0.35: 3.07}
SWEEP_H = 0.006


@pytest.fixture(scope="module")
def reference():
    return solve_integral_equation(MARKET, SIG, IntegralGrid.graded(1.0, 800))


@pytest.fixture(scope="module")
def full_resolution():
    return solve(MARKET, Constant(SIG), Grid(3.0, 750, 225000))


# --- 1 -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_1_full_resolution_benchmark(full_resolution, reference):
    c = Checks(1)
    rho_s = full_resolution.curve.final
    rho_i = solve_integral_equation(MARKET, SIG, IntegralGrid.uniform(1.0, 200)).final
    c.check("splitting rho(T) within 0.5% of 22.321", abs(rho_s / 22.321 - 1) <= 5e-3, f"{rho_s:.6f}")
    c.check("integral rho(T) within 0.5% of 22.375", abs(rho_i / 22.375 - 1) <= 5e-3, f"{rho_i:.6f}")
    gap = abs(rho_s - rho_i) / rho_i
    c.check("end-value gap <= 0.5%", gap <= 5e-3, f"{100 * gap:.3f}%")
    d = curve_distance(full_resolution.curve, reference)
    c.check("sup relative deviation <= 1%", d.l_inf / 20.0 <= 1e-2, f"{d.l_inf / 20.0:.4%}")
    mean_micro = full_resolution.report.mean_micro
    c.check("mean micro-iterations <= 6", mean_micro <= 6, f"{mean_micro:.2f}")
    c.assert_all()


# --- 2 -----------------------------------------------------------------------


def test_criterion_2_monotone_from_below(reference):
    c = Checks(2)
    finals = [solve(MARKET, Constant(SIG), Grid.from_cfl(h, 0.5, SIG)).curve.final for h in (0.03, 0.012, 0.006)]
    detail = ", ".join(f"{v:.4f}" for v in finals)
    c.check("rho_h(T) strictly increasing as h decreases", finals[0] < finals[1] < finals[2], detail)
    c.check(
        "rho_h(T) below the integral-equation value",
        max(finals) < reference.final,
        f"max {max(finals):.4f} < {reference.final:.4f}",
    )
    c.assert_all()


# --- 3 -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_orders_of_convergence(reference):
    c = Checks(3)
    rep = convergence_study(MARKET, SIG, [0.03, 0.012, 0.006, 0.004, 0.003], reference=reference, jobs=None)
    assert all(r.distance is not None for r in rep.rows), [r.error for r in rep.rows]
    e_inf = [r.eoc_linf for r in rep.rows[1:]]
    e_l2 = [r.eoc_l2 for r in rep.rows[1:]]
    fmt = lambda xs: ", ".join(f"{x:.3f}" for x in xs)  # noqa: E731
    c.check("eoc(Linf) in [0.85, 1.05]", all(0.85 <= e <= 1.05 for e in e_inf), fmt(e_inf))
    c.check(f"eoc(L2, {rep.l2_variant}) in [1.30, 1.55]", all(1.30 <= e <= 1.55 for e in e_l2), fmt(e_l2))
    # the other L2 variants, for the record; not part of the gate
    c.items.append(("eoc(L2, continuous) for reference", True, fmt(variant_orders(rep, "continuous"))))
    err0 = rep.rows[0].distance.l_inf
    c.check("err(Linf) at h=0.03 within 15% of 0.5", abs(err0 / 0.5 - 1) <= 0.15, f"{err0:.4f}")
    c.assert_all()


# --- 4 -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_rapm_sweep():
    c = Checks(4)
    grid = Grid.from_cfl(SWEEP_H, 0.5, SIG)
    rep = parameter_sweep(MARKET, grid, "rapm", list(PUBLISHED_RAPM), c_cost=0.01, jobs=None)
    assert all(r.distance is not None for r in rep.rows), [r.error for r in rep.rows]
    dist = {r.param: r.distance.l_inf for r in rep.rows}
    for p, ref in PUBLISHED_RAPM.items():
        c.check(f"R={p:g} within 15% of {ref}", abs(dist[p] / ref - 1) <= 0.15, f"{dist[p]:.4f}")
    slope = rep.overall_slope()
    c.check("fitted slope in [0.30, 0.36]", 0.30 <= slope <= 0.36, f"{slope:.4f}")
    vals = [dist[p] for p in PUBLISHED_RAPM]
    c.check("strictly increasing in R", all(np.diff(vals) > 0), "")
    c.assert_all()


# --- 5 -----------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_barles_soner_sweep():
    c = Checks(5)
    grid = Grid.from_cfl(SWEEP_H, 0.5, SIG)
    # the largest risk aversions need more sweeps per level at this grid
    controls = SolverControls(max_micro=500)
    rep = parameter_sweep(MARKET, grid, "barles-soner", list(PUBLISHED_BS), controls=controls, jobs=None)
    for r in rep.rows:
        c.check(f"a={r.param:g} solved", r.distance is not None, r.error or "")
    dist = {r.param: r.distance.l_inf for r in rep.rows if r.distance is not None}
    for p, ref in PUBLISHED_BS.items():
        if p in dist:
            c.check(f"a={p:g} within 20% of {ref}", abs(dist[p] / ref - 1) <= 0.20, f"{dist[p]:.4f}")
    slope = rep.overall_slope(params_max=0.05)
    c.check("small-a slope (a <= 0.05) in [0.62, 0.74]", 0.62 <= slope <= 0.74, f"{slope:.4f}")
    base = rep.curves[0.0].rhos
    worst = min(float(np.min(curve.rhos - base)) for p, curve in rep.curves.items() if p > 0)
    c.check("boundary above the constant-volatility one at every node", worst >= 0.0, f"min gap {worst:.3g}")
    c.assert_all()


# --- 6 -----------------------------------------------------------------------


def test_criterion_6_anchors():
    c = Checks(6)
    grid = Grid(3.0, 150, 400)
    st0 = initial_state(MARKET, grid)
    jump = int(np.argmax(st0.pi == 0.0))
    c.check(
        "initial jump at ln(r/q)",
        grid.x[jump - 1] < math.log(2.0) <= grid.x[jump],
        f"between x={grid.x[jump - 1]:.4f} and {grid.x[jump]:.4f}",
    )
    res = solve(MARKET, RAPM.from_costs(SIG, 0.01, 40), grid, SolverControls(store_every=1))
    ie = solve_integral_equation(MARKET, SIG, IntegralGrid.uniform(1.0, 50))
    c.check("splitting rho(0) == 20 exactly", res.curve.rhos[0] == 20.0, repr(res.curve.rhos[0]))
    c.check("integral rho(0) == 20 exactly", ie.rhos[0] == 20.0, repr(ie.rhos[0]))
    ends = all(s.pi[0] == -10.0 and s.pi[-1] == 0.0 for s in res.snapshots)
    c.check("Pi(0) = -E and Pi(L) = 0 at every level", ends, f"{len(res.snapshots)} levels")
    c.assert_all()


# --- 7 -----------------------------------------------------------------------


def test_criterion_7_property_suites():
    c = Checks(7)
    rng = np.random.default_rng(2024)

    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 51))
        a, cc = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
        b = (np.abs(a) + np.abs(cc) + rng.uniform(0.1, 2, n)) * rng.choice([-1.0, 1.0], n)
        sys = TridiagonalSystem(a, b, cc, rng.uniform(-5, 5, n))
        exact = np.linalg.solve(sys.to_dense(), sys.rhs)
        worst = max(worst, float(np.max(np.abs(thomas_solve(sys) - exact)) / np.max(np.abs(exact))))
    c.check("Thomas matches dense elimination to 1e-12", worst <= 1e-12, f"{worst:.2e}")

    g = Grid(3.0, 60, 10)
    pi = np.sort(rng.uniform(-10, 0, 61))
    pi[0], pi[-1] = -10.0, 0.0
    prev = PortfolioState(pi, 20.0)
    shifts = []
    for cells in (1, 2, 5):
        rho_new = 20.0 * math.exp(cells * g.h - (MARKET.r_rate - MARKET.q_div) * g.k)
        out = transport_step(prev, rho_new, MARKET, g)
        shifts.append(float(np.max(np.abs(out[cells:] - pi[:-cells]))))
    c.check("transport exact for integer-cell shifts", max(shifts) <= 1e-12, f"{max(shifts):.1e}")

    g = Grid(3.0, 90, 25)
    worst = 0.0
    for _ in range(50):
        kinks = np.sort(rng.choice(np.arange(1, 90), 6, replace=False)) * g.h
        slopes = rng.uniform(0.0, 8.0, 7)

        def profile(x):
            val = -10.0 + slopes[0] * x
            for kx, ds in zip(kinks, np.diff(slopes)):
                val = val + ds * np.maximum(x - kx, 0.0)
            return val

        shift = rng.uniform(-3, 3) * g.h
        rho_new = 20.0 * math.exp(shift - (MARKET.r_rate - MARKET.q_div) * g.k)
        xi = g.x - shift
        expected = np.where(xi <= 0, -10.0, np.where(xi > g.x_len, 0.0, profile(np.clip(xi, 0.0, g.x_len))))
        got = transport_step(PortfolioState(profile(g.x), 20.0), rho_new, MARKET, g)
        worst = max(worst, float(np.max(np.abs(got - expected))))
    c.check("transport matches characteristics oracle to 1e-12", worst <= 1e-12, f"{worst:.1e}")

    hs = np.array([0.03, 0.012, 0.006, 0.004])
    ps = np.array([1.0, 2.0, 5.0, 40.0])
    dev = max(
        float(np.max(np.abs(eoc(hs, 0.7 * hs) - 1.0))),
        float(np.max(np.abs(eoc(hs, 3.0 * hs**1.5) - 1.5))),
        float(np.max(np.abs(param_order(ps, 0.06 * ps ** (1 / 3)) - 1 / 3))),
    )
    c.check("eoc and param_order exact on power laws", dev <= 1e-12, f"{dev:.1e}")

    tab = default_psi_table()
    fine = build_psi_table(n_nodes=2 * len(tab.x) - 3)
    xs = np.geomspace(1e-7, 1e5, 57)
    drift = float(np.max(np.abs(fine(xs) / tab(xs) - 1)))
    c.check("Psi(0) = 0", tab(0.0) == 0.0, "")
    c.check("Psi monotone", bool(np.all(np.diff(tab(np.geomspace(1e-12, 1e6, 2000))) > 0)), "")
    c.check("Psi stable under node doubling", drift <= 1e-8, f"{drift:.1e}")

    m = parabolicity_margin(Constant(SIG), (-5.0, 5.0), 20.0, 0.0)
    c.check("parabolicity_margin(Constant) = sigma_hat^2", m == pytest.approx(SIG**2, rel=1e-12), repr(m))
    c.assert_all()


# --- 8 -----------------------------------------------------------------------

INVARIANT_MODELS = {
    "constant": Constant(SIG),
    "rapm R=40": RAPM.from_costs(SIG, 0.01, 40),
    "barles-soner a=0.05": BarlesSoner(SIG, a=0.05, r=MARKET.r_rate),
    "leland Le=0.2": Leland(SIG, le=0.2),
    "frey-stremme rho=0.01": FreyStremme(SIG, rho_f=0.01, lambda0=1.0),
}


@pytest.mark.parametrize("name", list(INVARIANT_MODELS))
def test_criterion_8_invariants(name):
    c = Checks(8)
    spec = INVARIANT_MODELS[name]
    grid = Grid.from_cfl(0.012, 0.5, SIG)
    res = solve(MARKET, spec, grid, SolverControls(store_every=1))
    e = MARKET.e_strike
    drops = float(np.min(np.diff(res.curve.rhos)))
    c.check(f"{name}: rho nondecreasing", drops >= -TOL, f"min step {drops:.2e}")
    bad = [s.j_index for s in res.snapshots if s.check(e, atol=1e-6 * e)]
    c.check(f"{name}: Pi within [-E, 0]", not bad, f"bad levels {bad[:5]}")
    slope = min(float((s.pi[1] - s.pi[0]) / grid.h) for s in res.snapshots)
    c.check(f"{name}: boundary slope >= -micro_tol", slope >= -TOL, f"min {slope:.2e}")
    snaps = res.snapshots
    worst = max(resubstitution_residual(a, b, grid, MARKET, spec) for a, b in zip(snaps, snaps[1:]))
    c.check(f"{name}: re-substitution residual <= 10 micro_tol", worst <= 10 * TOL, f"{worst:.2e}")
    c.assert_all()


@pytest.mark.slow
def test_criterion_8_full_resolution(full_resolution):
    c = Checks(8)
    res, e = full_resolution, MARKET.e_strike
    c.check("n=750 run: rho nondecreasing", res.curve.is_nondecreasing(TOL), "")
    bad = [s.j_index for s in res.snapshots if s.check(e, atol=1e-6 * e)]
    c.check("n=750 run: Pi within [-E, 0] on stored levels", not bad, f"bad levels {bad[:5]}")
    c.check("n=750 run: every level met micro_tol", float(res.report.residuals.max()) < TOL, "")
    c.assert_all()
