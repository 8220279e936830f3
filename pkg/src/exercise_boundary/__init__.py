"""Early exercise boundary of American calls under nonlinear Black-Scholes models.

The free boundary problem is mapped to a fixed domain and solved by operator
splitting (:mod:`~exercise_boundary.splitting_solver`).  For constant
volatility an independent integral-equation solver
(:mod:`~exercise_boundary.integral_benchmark`) serves as reference.
"""

from .landau import BoundaryCurve, Grid, MarketParams, PortfolioState, initial_state, option_price, reconstruct_price
from .splitting_solver import SolverControls, SolveResult, solve
from .volatility import RAPM, BarlesSoner, Constant, FreyStremme, Leland, sigma_squared

__version__ = "0.1.0"

__all__ = [
    "BoundaryCurve",
    "Grid",
    "MarketParams",
    "PortfolioState",
    "initial_state",
    "option_price",
    "reconstruct_price",
    "SolverControls",
    "SolveResult",
    "solve",
    "Constant",
    "Leland",
    "BarlesSoner",
    "FreyStremme",
    "RAPM",
    "sigma_squared",
]
