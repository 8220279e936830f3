# %% [markdown]
# # Barles-Soner volatility
#
# The correction is sigma^2 Psi(a^2 e^{r tau} S^2 Gamma). Psi solves a
# singular ODE. Near zero it behaves like (3/2)^(2/3) x^(1/3) and for
# large x it grows linearly.

# %%
import numpy as np

from exercise_boundary.analysis import parameter_sweep
from exercise_boundary.landau import Grid, MarketParams
from exercise_boundary.splitting_solver import SolverControls
from exercise_boundary.volatility import default_psi_table

psi = default_psi_table()
for x in (1e-9, 1e-3, 1.0, 1e3, 1e6):
    print(f"Psi({x:g}) = {float(psi(x)):.6g}")

# %% [markdown]
# Sweep the risk aversion a. The largest values stiffen the boundary map,
# so each level needs more micro-iterations than the default cap allows.

# %%
a_list = [0.01, 0.02, 0.05, 0.1, 0.2, 0.35]
grid = Grid.from_cfl(0.012, 0.5, 0.2)
rep = parameter_sweep(MarketParams(), grid, "barles-soner", a_list,
                      controls=SolverControls(max_micro=500), jobs=None)
for r in rep.rows:
    print(f"a={r.param:5.2f}  sup dist {r.distance.l_inf:.4f}  alpha {r.alpha_linf:.3f}")
print("small-a slope:", round(rep.overall_slope(params_max=0.05), 3))

# %% [markdown]
# At a = 0.35 the boundary need not stay concave in tau. Count the sign
# changes of its second difference on the stored curve.

# %%
curve = rep.curves[0.35]
sub = slice(None, None, max(1, len(curve) // 200))
d2 = np.diff(curve.rhos[sub], 2)
print("sign changes of the second difference:", int(np.sum(np.diff(np.sign(d2)) != 0)))
