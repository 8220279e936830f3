# %% [markdown]
# # Orders of convergence
#
# Refine h with sigma^2 k / h^2 = 1/2 held fixed, and measure each curve
# against the integral-equation boundary on 800 graded nodes.

# %%
from exercise_boundary.analysis import L2_VARIANTS, convergence_study, variant_orders
from exercise_boundary.landau import MarketParams

rep = convergence_study(MarketParams(), 0.2, [0.03, 0.012, 0.006, 0.004, 0.003], jobs=None)

# %%
print(f"{'h':>6} {'err_inf':>9} {'eoc':>6} {'err_l2':>9} {'eoc':>6}  rho(T)")
for r in rep.rows:
    print(f"{r.h:6.3f} {r.distance.l_inf:9.4f} {r.eoc_linf:6.2f} "
          f"{r.distance.l2(rep.l2_variant):9.4f} {r.eoc_l2:6.2f}  {r.rho_final:.4f}")

# %% [markdown]
# The L2 column uses the "grid" variant: h times the sum of squared
# differences over 100 equispaced times. That weight grows like sqrt(h),
# so its order sits half a unit above the sup-norm order. The true
# time-L2 norm converges at the sup-norm rate.

# %%
for v in L2_VARIANTS:
    print(v, [round(e, 3) for e in variant_orders(rep, v)])

# %%
rep.to_csv("convergence.csv")
