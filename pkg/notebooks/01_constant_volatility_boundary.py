# %% [markdown]
# # Early exercise boundary under constant volatility
#
# An American call on a dividend-paying stock is exercised early once the
# stock climbs above a critical price. Near expiry that price starts at
# rE/q. Below we compute the whole curve twice: once with the splitting
# scheme on the Landau-transformed problem, and once from the integral
# equation.

# %%
import numpy as np

from exercise_boundary.integral_benchmark import IntegralGrid, solve_integral_equation
from exercise_boundary.landau import Grid, MarketParams, option_price
from exercise_boundary.splitting_solver import solve
from exercise_boundary.volatility import Constant

market = MarketParams()  # E=10, r=0.1, q=0.05, T=1
sigma = Constant(0.2)

# %% [markdown]
# A desk-scale grid: h = 0.012 and sigma^2 k / h^2 = 1/2.

# %%
grid = Grid.from_cfl(0.012, 0.5, 0.2)
res = solve(market, sigma, grid)
print(grid, "->", res.curve)
print("mean micro-iterations per level:", round(res.report.mean_micro, 2))

# %%
ie = solve_integral_equation(market, 0.2, IntegralGrid.graded(1.0, 800))
print("integral equation rho(T) =", round(ie.final, 5))
print("splitting          rho(T) =", round(res.curve.final, 5))

# %% [markdown]
# The splitting curve approaches from below. Its gap to the benchmark is
# first order in h (see the convergence notebook).

# %%
for tau in (0.0, 0.01, 0.1, 0.5, 1.0):
    print(f"tau={tau:5.2f}  splitting {float(res.curve(tau)):8.4f}  integral {float(ie(tau)):8.4f}")

# %% [markdown]
# Prices come from the final portfolio by integrating Pi back from the
# boundary. Above the boundary the call is worth S - E.

# %%
for s in (8.0, 10.0, 15.0, 20.0, 25.0):
    q = option_price(res.final_state, s, market, grid)
    print(f"S={s:5.1f}  V={q.value:8.4f}  exercise={q.exercised}")

# %%
np.savetxt("constant_boundary.csv", np.column_stack([res.curve.taus, res.curve.rhos]),
           delimiter=",", header="tau,rho", comments="")
