"""Nonlinear volatility models.

Every model is evaluated as ``sigma^2(p, xi, tau)`` where ``p = S^2 V_SS`` is the
scaled gamma, ``xi = S`` the asset price and ``tau`` the time to expiry.  In the
transformed variables ``p`` is simply the x-derivative of the synthetic
portfolio, so the solvers never need the option price itself.

All evaluators accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from typing import ClassVar, Mapping

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    ConfigError,
    IntegrationError,
    SingularVolatilityError,
    VolatilityDomainError,
)

__all__ = [
    "VolatilitySpec",
    "Constant",
    "Leland",
    "BarlesSoner",
    "FreyStremme",
    "RAPM",
    "PsiTable",
    "build_psi_table",
    "psi_seed",
    "default_psi_table",
    "sigma_squared",
    "rapm_mu",
    "leland_constant",
    "parabolicity_margin",
    "margin_values",
    "spec_from_dict",
]

# |1 - rho*lambda*p/xi| below this is treated as a pole of the Frey-Stremme model
FREY_STREMME_POLE_TOL = 1e-12
# Barles-Soner slopes p in [-BS_NEGATIVE_SLACK, 0) are roundoff and mapped to 0;
# differences of Pi ~ E near machine precision divided by h land around 1e-11
BS_NEGATIVE_SLACK = 1e-8


# --------------------------------------------------------------------------- #
#  Barles-Soner Psi function
# --------------------------------------------------------------------------- #


def _psi_rhs(x, psi):
    return (psi + 1.0) / (2.0 * np.sqrt(x * psi) - x)


# Small-x expansion Psi = c0 x^(1/3) + c1 x^(2/3) + O(x): balancing powers of
# x^(1/3) in Psi' (2 sqrt(x Psi) - x) = Psi + 1 gives c0^(3/2) = 3/2 and
# c1 = 4 / (5 sqrt(c0)).
SEED_C0 = 1.5 ** (2.0 / 3.0)
SEED_C1 = 0.8 / math.sqrt(SEED_C0)


def psi_seed(x):
    """Two-term small-argument law for ``Psi`` (relative error ``O(x^(2/3))``)."""
    u = np.cbrt(x)
    return SEED_C0 * u + SEED_C1 * u * u


@dataclass(frozen=True, eq=False)
class PsiTable:
    """Tabulated solution of the Barles-Soner ODE.

    ``x`` starts with the anchor ``0`` followed by a geometric grid
    ``eps .. x_max``; ``psi`` holds the matching values.  Between ``0`` and
    ``eps`` the two-term seed law :func:`psi_seed` is used, inside the grid
    the cubic Hermite interpolant in ``log x`` built from the exact ODE
    slopes, and beyond ``x_max`` a straight line with the ODE slope at
    ``x_max``.
    """

    x: np.ndarray
    psi: np.ndarray
    tail_slope: float
    _interp: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        x.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "psi", psi)
        # d psi / d log x = x psi'(x), straight from the ODE
        dpsi_dt = x[1:] * _psi_rhs(x[1:], psi[1:])
        object.__setattr__(self, "_interp", CubicHermiteSpline(np.log(x[1:]), psi[1:], dpsi_dt))

    @property
    def eps(self) -> float:
        return float(self.x[1])

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0):
            raise VolatilityDomainError("Psi is only defined for x >= 0")
        out = np.empty_like(x)
        low = x < self.eps
        high = x > self.x_max
        mid = ~(low | high)
        out[low] = psi_seed(x[low])
        out[mid] = self._interp(np.log(x[mid]))
        out[high] = self.psi[-1] + self.tail_slope * (x[high] - self.x_max)
        return out if out.ndim else float(out)


def build_psi_table(
    eps: float = 1e-8, x_max: float = 1e6, n_nodes: int = 2001, tol: float = 1e-12
) -> PsiTable:
    """Integrate ``Psi' = (Psi + 1) / (2 sqrt(x Psi) - x)`` from ``eps`` to ``x_max``.

    The integration runs in ``t = log x`` (where the right-hand side is bounded)
    with an adaptive 8th order Runge-Kutta method and is sampled on
    ``n_nodes`` geometrically spaced abscissae.

    Raises
    ------
    IntegrationError
        If the denominator ``2 sqrt(x Psi) - x`` reaches zero or the
        integrator fails.
    """
    if not 0.0 < eps < 1e-2:
        raise ValueError("eps must lie in (0, 1e-2)")
    if not x_max > eps:
        raise ValueError("x_max must exceed eps")
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")

    psi0 = float(psi_seed(eps))

    def rhs(t, y):
        x = math.exp(t)
        denom = 2.0 * math.sqrt(x * max(y[0], 0.0)) - x
        if denom <= 0.0:
            raise IntegrationError(f"Psi ODE denominator vanished at x={x:.6g}")
        return [x * (y[0] + 1.0) / denom]

    t_nodes = np.linspace(math.log(eps), math.log(x_max), n_nodes)
    sol = solve_ivp(
        rhs,
        (t_nodes[0], t_nodes[-1]),
        [psi0],
        method="DOP853",
        t_eval=t_nodes,
        rtol=tol,
        atol=tol * psi0,
    )
    if not sol.success:
        raise IntegrationError(f"Psi ODE integration failed: {sol.message}")
    psi = sol.y[0]
    if not np.all(np.diff(psi) > 0.0):
        raise IntegrationError("Psi table is not strictly increasing")
    x = np.concatenate([[0.0], np.exp(t_nodes)])
    x[-1] = x_max
    tail = float(_psi_rhs(x_max, psi[-1]))
    return PsiTable(x=x, psi=np.concatenate([[0.0], psi]), tail_slope=tail)


@functools.lru_cache(maxsize=1)
def default_psi_table() -> PsiTable:
    """Shared table with the default resolution, built on first use."""
    return build_psi_table()


# --------------------------------------------------------------------------- #
#  Model parameters
# --------------------------------------------------------------------------- #


def rapm_mu(c: float, r_prem: float) -> float:
    """RAPM coefficient ``mu = 3 (C^2 R / 2 pi)^(1/3)``."""
    if c < 0 or r_prem < 0:
        raise VolatilityDomainError("transaction cost and risk premium must be >= 0")
    return 3.0 * (c * c * r_prem / (2.0 * math.pi)) ** (1.0 / 3.0)


def leland_constant(c: float, sigma_hat: float, dt: float) -> float:
    """Leland number ``sqrt(2/pi) C / (sigma_hat sqrt(dt))``."""
    if sigma_hat <= 0 or dt <= 0:
        raise VolatilityDomainError("sigma_hat and dt must be positive")
    if c < 0:
        raise VolatilityDomainError("transaction cost must be >= 0")
    return math.sqrt(2.0 / math.pi) * c / (sigma_hat * math.sqrt(dt))


# --------------------------------------------------------------------------- #
#  Volatility specifications
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class VolatilitySpec:
    """Base class.  Subclasses implement :meth:`sigma_squared`."""

    sigma_hat: float
    name: ClassVar[str] = ""

    def __post_init__(self):
        if not self.sigma_hat > 0:
            raise VolatilityDomainError("sigma_hat must be positive")

    def sigma_squared(self, p, xi, tau):
        raise NotImplementedError

    @property
    def is_linear(self) -> bool:
        """True when the model reduces to the constant volatility ``sigma_hat``."""
        return False

    def to_dict(self) -> dict:
        return {"model": self.name, **asdict(self)}


@dataclass(frozen=True)
class Constant(VolatilitySpec):
    name: ClassVar[str] = "constant"

    def sigma_squared(self, p, xi, tau):
        s2 = self.sigma_hat**2
        if np.ndim(p) == 0 and np.ndim(xi) == 0:
            return s2
        return np.full(np.broadcast(np.asarray(p), np.asarray(xi)).shape, s2)

    @property
    def is_linear(self) -> bool:
        return True


@dataclass(frozen=True)
class Leland(VolatilitySpec):
    """Transaction-cost model ``sigma_hat^2 (1 + Le sgn(p))`` with ``sgn(0) = 0``."""

    le: float = 0.0
    name: ClassVar[str] = "leland"

    def __post_init__(self):
        super().__post_init__()
        if self.le < 0:
            raise VolatilityDomainError("Leland constant must be >= 0")

    def sigma_squared(self, p, xi, tau):
        return self.sigma_hat**2 * (1.0 + self.le * np.sign(p))

    @property
    def is_linear(self) -> bool:
        return self.le == 0


@dataclass(frozen=True)
class BarlesSoner(VolatilitySpec):
    """Utility-based model ``sigma_hat^2 (1 + Psi(a^2 e^(r tau) p))``."""

    a: float = 0.0
    r: float = 0.0
    name: ClassVar[str] = "barles-soner"

    def __post_init__(self):
        super().__post_init__()
        if self.a < 0:
            raise VolatilityDomainError("risk aversion a must be >= 0")

    def sigma_squared(self, p, xi, tau):
        p = np.asarray(p, dtype=float)
        if np.any(p < 0):
            if np.any(p < -BS_NEGATIVE_SLACK):
                bad = int(np.argmin(p))
                where = f" at index {bad}" if p.ndim else ""
                raise VolatilityDomainError(f"Barles-Soner gamma term p={p.flat[bad]:.3g} < 0{where}")
            p = np.maximum(p, 0.0)
        arg = self.a * self.a * np.exp(self.r * np.asarray(tau, dtype=float)) * p
        out = self.sigma_hat**2 * (1.0 + default_psi_table()(arg))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def is_linear(self) -> bool:
        return self.a == 0


@dataclass(frozen=True)
class FreyStremme(VolatilitySpec):
    """Feedback model ``sigma_hat^2 (1 - rho lambda0 p / xi)^(-2)``.

    Only a constant liquidity profile ``lambda0 >= 1`` is supported.
    """

    rho_f: float = 0.0
    lambda0: float = 1.0
    name: ClassVar[str] = "frey-stremme"

    def __post_init__(self):
        super().__post_init__()
        if self.rho_f < 0:
            raise VolatilityDomainError("feedback strength must be >= 0")
        if self.lambda0 < 1:
            raise VolatilityDomainError("liquidity profile lambda0 must be >= 1")

    def sigma_squared(self, p, xi, tau):
        denom = 1.0 - self.rho_f * self.lambda0 * np.asarray(p, float) / np.asarray(xi, float)
        small = np.abs(denom) < FREY_STREMME_POLE_TOL
        if np.any(small):
            raise SingularVolatilityError("Frey-Stremme volatility is singular (1 - rho*lambda*p/xi = 0)")
        out = self.sigma_hat**2 / denom**2
        return float(out) if np.ndim(out) == 0 else out

    @property
    def is_linear(self) -> bool:
        return self.rho_f == 0


@dataclass(frozen=True)
class RAPM(VolatilitySpec):
    """Risk adjusted pricing model ``sigma_hat^2 (1 + mu (p / xi)^(1/3))``.

    The cube root is signed so the map stays continuous for ``p < 0``.
    """

    mu: float = 0.0
    name: ClassVar[str] = "rapm"

    def __post_init__(self):
        super().__post_init__()
        if self.mu < 0:
            raise VolatilityDomainError("mu must be >= 0")

    @classmethod
    def from_costs(cls, sigma_hat: float, c: float, r_prem: float) -> "RAPM":
        return cls(sigma_hat=sigma_hat, mu=rapm_mu(c, r_prem))

    def sigma_squared(self, p, xi, tau):
        out = self.sigma_hat**2 * (1.0 + self.mu * np.cbrt(np.asarray(p, float) / np.asarray(xi, float)))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def is_linear(self) -> bool:
        return self.mu == 0


MODELS: dict[str, type[VolatilitySpec]] = {
    cls.name: cls for cls in (Constant, Leland, BarlesSoner, FreyStremme, RAPM)
}


def sigma_squared(spec: VolatilitySpec, p, xi, tau):
    """Evaluate ``sigma^2(p, xi, tau)`` for ``spec``."""
    return spec.sigma_squared(p, xi, tau)


def margin_values(spec: VolatilitySpec, p, xi, tau) -> np.ndarray:
    """Pointwise ``sigma^2 + p d(sigma^2)/dp`` at the slopes ``p``."""
    p = np.asarray(p, dtype=float)
    step = 1e-6 * np.maximum(np.abs(p), 1.0)
    # never step below zero from p >= -step: keeps p >= 0 models in their domain
    p_lo = np.where(p >= -step, np.maximum(p - step, np.minimum(p, 0.0)), p - step)
    p_hi = p + step
    deriv = (spec.sigma_squared(p_hi, xi, tau) - spec.sigma_squared(p_lo, xi, tau)) / (p_hi - p_lo)
    return spec.sigma_squared(p, xi, tau) + p * deriv


def parabolicity_margin(
    spec: VolatilitySpec, p_range: tuple[float, float], xi: float, tau: float, n_samples: int = 201
) -> float:
    """Smallest sampled value of ``sigma^2 + p d(sigma^2)/dp`` on ``p_range``.

    A positive result certifies that ``p -> sigma^2(p) p`` is strictly
    increasing on the sample.  The derivative is a centered difference with
    step ``1e-6 max(|p|, 1)``; near zero the lower stencil point is clipped
    at ``min(p, 0)`` so models defined on ``p >= 0`` are never probed
    outside their domain.
    """
    lo, hi = map(float, p_range)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ValueError("p_range must be a finite interval")
    p = np.linspace(lo, hi, n_samples)
    return float(np.min(margin_values(spec, p, xi, tau)))


# --------------------------------------------------------------------------- #
#  (De)serialization
# --------------------------------------------------------------------------- #

_ALLOWED_KEYS = {
    "constant": {"sigma_hat"},
    "leland": {"sigma_hat", "le", "C", "dt"},
    "barles-soner": {"sigma_hat", "a", "r"},
    "frey-stremme": {"sigma_hat", "rho_f", "lambda0"},
    "rapm": {"sigma_hat", "mu", "C", "R"},
}


def spec_from_dict(data: Mapping, default_rate: float | None = None, path: str = "model") -> VolatilitySpec:
    """Build a spec from a config mapping keyed by ``"model"``.

    ``rapm`` accepts either ``mu`` or the pair ``C``/``R``; ``leland`` accepts
    ``le`` or ``C``/``dt``.  A missing Barles-Soner ``r`` falls back to
    ``default_rate`` (the market rate).
    """
    data = dict(data)
    model = data.pop("model", None)
    if model not in _ALLOWED_KEYS:
        raise ConfigError(f"{path}.model", f"unknown model {model!r}; expected one of {sorted(_ALLOWED_KEYS)}")
    unknown = set(data) - _ALLOWED_KEYS[model]
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    if "sigma_hat" not in data:
        raise ConfigError(f"{path}.sigma_hat", "missing")
    try:
        if model == "rapm" and ("C" in data or "R" in data):
            if "mu" in data:
                raise ConfigError(f"{path}.mu", "give either mu or C/R, not both")
            data["mu"] = rapm_mu(float(data.pop("C", 0.0)), float(data.pop("R", 0.0)))
        if model == "leland" and ("C" in data or "dt" in data):
            if "le" in data:
                raise ConfigError(f"{path}.le", "give either le or C/dt, not both")
            if "dt" not in data:
                raise ConfigError(f"{path}.dt", "missing")
            data["le"] = leland_constant(float(data.pop("C", 0.0)), float(data["sigma_hat"]), float(data.pop("dt")))
        if model == "barles-soner" and "r" not in data:
            if default_rate is None:
                raise ConfigError(f"{path}.r", "missing")
            data["r"] = default_rate
        return MODELS[model](**{k: float(v) for k, v in data.items()})
    except VolatilityDomainError as exc:
        raise ConfigError(path, str(exc)) from exc
