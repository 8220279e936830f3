import math

import numpy as np
import pytest

from exercise_boundary.errors import NonConvergenceError
from exercise_boundary.integral_benchmark import (
    IntegralGrid,
    a_kernel,
    fixed_point_residuals,
    integral_rhs,
    solve_integral_equation,
)
from exercise_boundary.landau import BoundaryCurve, MarketParams

MARKET = MarketParams()
SIG = 0.2


def test_kernel_diagonal_vanishes():
    rho = lambda t: 20.0 + np.sqrt(t)  # noqa: E731
    assert a_kernel(rho, 0.4, 0.4, MARKET, SIG) == 0.0


def test_kernel_constant_boundary():
    assert a_kernel(lambda t: 21.0, 1.5, 0.5, MARKET, SIG) == pytest.approx(0.03, rel=1e-14)


def test_kernel_exponential_boundary():
    c = 0.37
    rho = lambda t: 20.0 * np.exp(c * t)  # noqa: E731
    assert a_kernel(rho, 0.9, 0.2, MARKET, SIG) == pytest.approx((c + 0.1 - 0.05 - 0.02) * 0.7, rel=1e-12)


def test_grids():
    u = IntegralGrid.uniform(1.0, 4)
    assert np.allclose(u.taus, [0, 0.25, 0.5, 0.75, 1.0])
    gr = IntegralGrid.graded(2.0, 2)
    assert np.allclose(gr.taus, [0.0, 0.5, 2.0])
    with pytest.raises(ValueError):
        IntegralGrid(np.array([0.1, 0.2]))


@pytest.mark.parametrize("tau", [1e-3, 1e-4, 1e-6])
def test_small_tau_limit(tau):
    # with rho = rE/q the kernel bracket is sigma_hat, the boundary term is
    # exponentially small and the integral is 2 sigma_hat sqrt(tau) + O(tau^(3/2))
    curve = BoundaryCurve([0.0, tau], [20.0, 20.0], MARKET)
    expected = 20.0 * (1.0 + 2.0 * SIG * math.sqrt(tau) / math.sqrt(2.0 * math.pi))
    got = integral_rhs(curve, tau, MARKET, SIG)
    assert got == pytest.approx(expected, abs=20.0 * tau**1.5)
    assert got - 20.0 < 4.0 * math.sqrt(tau)


@pytest.fixture(scope="module")
def uniform200():
    return solve_integral_equation(MARKET, SIG, IntegralGrid.uniform(1.0, 200))


def test_rho_zero_exact(uniform200):
    assert uniform200.rhos[0] == 20.0


def test_nondecreasing(uniform200):
    assert uniform200.is_nondecreasing()


def test_fixed_point(uniform200):
    res = fixed_point_residuals(uniform200, MARKET, SIG)
    assert res.max() < 1e-10
    assert abs(integral_rhs(uniform200, 1.0, MARKET, SIG) - uniform200.final) / uniform200.final < 1e-12


def test_end_value(uniform200):
    assert uniform200.final == pytest.approx(22.375, rel=5e-3)


def test_quadrature_refinement():
    a = solve_integral_equation(MARKET, SIG, IntegralGrid.graded(1.0, 400, 8))
    b = solve_integral_equation(MARKET, SIG, IntegralGrid.graded(1.0, 400, 16))
    assert np.max(np.abs(a.rhos - b.rhos)) < 1e-8


def test_grid_refinement_self_convergence(uniform200):
    fine = solve_integral_equation(MARKET, SIG, IntegralGrid.graded(1.0, 800))
    assert abs(fine.final - uniform200.final) < 2e-4


def test_off_node_evaluation(uniform200):
    # rhs at a point between nodes uses the curve's own interpolation
    tau = 0.5025
    assert integral_rhs(uniform200, tau, MARKET, SIG) == pytest.approx(float(uniform200(tau)), rel=1e-5)


def test_picard_coarse_agrees_with_march():
    g = IntegralGrid.uniform(1.0, 10)
    march = solve_integral_equation(MARKET, SIG, g)
    picard = solve_integral_equation(MARKET, SIG, g, method="picard", damping=0.5, max_iter=2000)
    np.testing.assert_allclose(picard.rhos, march.rhos, atol=1e-9)


def test_picard_undamped_fails():
    with pytest.raises(NonConvergenceError) as info:
        solve_integral_equation(MARKET, SIG, IntegralGrid.uniform(1.0, 20), method="picard", max_iter=50)
    assert info.value.partial is not None


def test_argument_checks():
    with pytest.raises(ValueError):
        solve_integral_equation(MARKET, 0.0)
    with pytest.raises(ValueError):
        solve_integral_equation(MARKET, SIG, IntegralGrid.uniform(2.0, 10))
    with pytest.raises(ValueError):
        solve_integral_equation(MARKET, SIG, method="newton")
