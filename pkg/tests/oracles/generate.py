"""Regenerate the frozen oracle values used by the test suite.

Nothing here imports the package.  Run ``python3 tests/oracles/generate.py``
and compare with the constants in ``tests/oracle_values.py``.
"""

import math

import mpmath

mpmath.mp.dps = 40


def rapm_mu(c, r_prem):
    return 3 * mpmath.cbrt(mpmath.mpf(c) ** 2 * r_prem / (2 * mpmath.pi))


def leland(c, sigma, dt):
    c, sigma, dt = map(mpmath.mpf, (c, sigma, dt))
    return mpmath.sqrt(2 / mpmath.pi) * c / (sigma * mpmath.sqrt(dt))


def psi_at_one(eps=1e-10):
    """Fixed-step RK4 in t = log x from x = eps, step halving until stable.

    Seed Psi(eps) = (3/2)^(2/3) eps^(1/3), the leading term of the small-x
    balance Psi' ~ 1 / (2 sqrt(x Psi)).  A seed perturbation decays like
    x^(-1/6) while Psi grows like x^(1/3), so the relative seed error at
    x = 1 is damped by about sqrt(eps).
    """

    def f(t, y):
        x = math.exp(t)
        return x * (y + 1.0) / (2.0 * math.sqrt(x * y) - x)

    def integrate(n):
        t0, t1 = math.log(eps), 0.0
        h = (t1 - t0) / n
        y = 1.5 ** (2.0 / 3.0) * eps ** (1.0 / 3.0)
        t = t0
        for _ in range(n):
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h * k1 / 2)
            k3 = f(t + h / 2, y + h * k2 / 2)
            k4 = f(t + h, y + h * k3)
            y += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
            t += h
        return y

    n, prev = 2000, None
    while True:
        cur = integrate(n)
        if prev is not None and abs(cur - prev) < 1e-12 * abs(cur):
            return cur
        prev, n = cur, 2 * n


def rapm_margin_min(sigma, mu):
    """min over p in [0.1 xi, 10 xi] of sigma^2 (1 + (4 mu / 3) (p/xi)^(1/3)); increasing, so at 0.1."""
    return mpmath.mpf(sigma) ** 2 * (1 + 4 * mpmath.mpf(mu) / 3 * mpmath.cbrt(mpmath.mpf("0.1")))


if __name__ == "__main__":
    print("RAPM_MU_C001_R40 =", mpmath.nstr(rapm_mu("0.01", 40), 17))
    print("LELAND_C001_S02_DT001 =", mpmath.nstr(leland("0.01", "0.2", "0.01"), 17))
    print("PSI_AT_ONE =", repr(psi_at_one()))
    print("RAPM_MARGIN_MIN =", mpmath.nstr(rapm_margin_min("0.2", "0.2579"), 17))
