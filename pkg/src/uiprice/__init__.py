"""Exponential utility indifference pricing with traded and nontraded assets.

Engines: a finite-difference solver for the semilinear pricing PDE
(``pde``), a regression scheme for the quadratic BSDE with Malliavin-weight
gradients (``mc``), small risk-aversion expansions and bounds
(``asymptotics``), hedging and indifference checks (``hedging``) and the
two-fuel electricity model (``power``).
"""
__version__ = "0.1.0"

from .errors import (HypothesisViolation, ModelValidationError, NumericalDivergence, QuadratureError,
                     RankDeficiencyError, UIPError)
from .model import MarketModel, State, simulate_paths
from .pde import GridSpec, PriceSurface, build_grid, solve_uip_pde
from .mc import BSDESolution, malliavin_gradient, price_mmm, solve_bsde
from .asymptotics import Expansion, expand_gradients, expand_price, price_lower_bound, zeta
from .hedging import optimal_strategy, simulate_pnl, verify_indifference
from .power import PowerModel, forward_p0, forward_uip, forward_zeta, psi_derivatives

__all__ = [
    "BSDESolution", "Expansion", "GridSpec", "HypothesisViolation", "MarketModel", "ModelValidationError",
    "NumericalDivergence", "PowerModel", "PriceSurface", "QuadratureError", "RankDeficiencyError", "State",
    "UIPError", "build_grid", "expand_gradients", "expand_price", "forward_p0", "forward_uip", "forward_zeta",
    "malliavin_gradient", "optimal_strategy", "price_lower_bound", "price_mmm", "psi_derivatives",
    "simulate_paths", "simulate_pnl", "solve_bsde", "solve_uip_pde", "verify_indifference", "zeta",
]
