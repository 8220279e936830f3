"""Frozen oracle values.  Regenerate with ``python3 tests/oracles/generate.py``."""

# 3 (C^2 R / 2 pi)^(1/3) at C=0.01, R=40, 40-digit arithmetic
RAPM_MU_C001_R40 = 0.25807620414842989
# sqrt(2/pi) C / (sigma sqrt(dt)) at C=0.01, sigma=0.2, dt=0.01
LELAND_C001_S02_DT001 = 0.39894228040143268
# Psi(1): fixed-step RK4 in log x from x=1e-10, step halving to 1e-12 relative
PSI_AT_ONE = 2.7578085766391096
# min of sigma^2 (1 + (4 mu/3) (p/xi)^(1/3)) on p/xi in [0.1, 10], sigma=0.2, mu=0.2579
RAPM_MARGIN_MIN = 0.04638435072100659
