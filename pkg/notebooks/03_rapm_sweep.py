# %% [markdown]
# # Risk-adjusted volatility
#
# RAPM adds a volatility term that grows with gamma. It is weighted by
# mu = 3 (C^2 R / 2 pi)^(1/3). With C = 0.01 fixed, we vary the
# risk-premium coefficient R and watch the boundary move away from the
# constant-volatility one.

# %%
import numpy as np

from exercise_boundary.analysis import parameter_sweep
from exercise_boundary.landau import Grid, MarketParams
from exercise_boundary.volatility import rapm_mu

R = [1, 2, 5, 10, 20, 40, 100]
print("mu(R=40) =", rapm_mu(0.01, 40))

# %%
grid = Grid.from_cfl(0.006, 0.5, 0.2)
rep = parameter_sweep(MarketParams(), grid, "rapm", R, c_cost=0.01, jobs=None)
for r in rep.rows:
    print(f"R={r.param:5.0f}  sup dist {r.distance.l_inf:.4f}  alpha {r.alpha_linf:.3f}  rho(T) {r.rho_final:.4f}")

# %% [markdown]
# The distances follow R^(1/3) closely:

# %%
print("fitted slope:", round(rep.overall_slope(), 4))
print("ratio dist / R^(1/3):", np.round([r.distance.l_inf / r.param ** (1 / 3) for r in rep.rows], 4))

# %%
rep.to_csv("rapm_sweep.csv")
