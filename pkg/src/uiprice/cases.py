"""Standard benchmark configurations shared by tests, the acceptance suite and the CLI."""
from __future__ import annotations

import numpy as np

from . import payoff as P
from .model import MarketModel, State

BENCH_AMPLITUDE = 4.0
BENCH_X0 = 0.8


def benchmark_model() -> MarketModel:
    """One traded asset and one mean-reverting nontraded factor."""
    return MarketModel(mu=[0.05], sigma=[[0.25]], alpha=[1.0], beta=[[0.6]], T=1.0)


def benchmark_state(x0=BENCH_X0) -> State:
    return State(0.0, [1.0], [x0])


def benchmark_payoff(amplitude=BENCH_AMPLITUDE):
    """Smooth bounded product ``A s/(1+s) (1 + tanh x)``."""
    return P.smooth_product(amplitude)


def nontraded_model(alpha=1.0, beta=0.6, T=1.0) -> MarketModel:
    """Pure nontraded model (``n = 0, d = 1``)."""
    return MarketModel(mu=[], sigma=np.zeros((0, 0)), alpha=[alpha], beta=[[beta]], T=T)


def burgers_model(beta=1.0, T=1.0) -> MarketModel:
    """Driftless Brownian nontraded factor, for which the Hopf-Cole transform is explicit."""
    return MarketModel(mu=[], sigma=np.zeros((0, 0)), alpha=[0.0], beta=[[beta]], T=T)


def call_model() -> MarketModel:
    """One traded asset with an inert nontraded factor."""
    return MarketModel(mu=[0.05], sigma=[[0.25]], alpha=[1.0], beta=[[0.6]], T=1.0)


def spread_model() -> MarketModel:
    """Two correlated traded spreads and one nontraded factor."""
    return MarketModel(mu=[0.05, 0.03], sigma=[[0.3, 0.0], [0.1, 0.3]], alpha=[1.0], beta=[[0.5]], T=1.0)


def spread_state() -> State:
    return State(0.0, [1.0, 0.8], [0.0])
