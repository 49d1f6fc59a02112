import numpy as np
import pytest

from uiprice import cases, pde
from uiprice import payoff as P
from uiprice.errors import ModelValidationError
from uiprice.hedging import StrategySpec, optimal_strategy, verify_indifference
from uiprice.mc import solve_bsde

SPOTS_S = np.array([[0.9], [1.0], [1.1]])
SPOTS_X = np.array([[0.5], [0.8], [1.0]])


def _surface(payoff, gamma=0.5, nodes=61, steps=16):
    model, st = cases.benchmark_model(), cases.benchmark_state()
    grid = pde.build_grid(model, st, pde.GridSpec(nodes=nodes, steps=steps))
    return pde.solve_uip_pde(model, payoff, gamma, grid)


def test_hedge_vanishes_for_payoff_without_traded_exposure():
    model = cases.benchmark_model()
    strat = optimal_strategy(_surface(P.tanh_x(1, 1)), model, 0.5, "hedge")
    assert np.allclose(strat(0.0, SPOTS_S, SPOTS_X), 0.0, atol=1e-10)


def test_hedge_of_the_traded_asset_is_a_short_position():
    model = cases.benchmark_model()
    strat = optimal_strategy(_surface(P.linear_in_s(1.0, tilt=0.0)), model, 0.5, "hedge")
    assert np.allclose(strat(0.0, SPOTS_S, SPOTS_X), -SPOTS_S, rtol=2e-3)


def test_claim_strategy_is_investment_plus_hedge():
    model = cases.benchmark_model()
    surf = _surface(cases.benchmark_payoff())
    claim = optimal_strategy(surf, model, 0.5, "claim")(0.0, SPOTS_S, SPOTS_X)
    inv = optimal_strategy(surf, model, 0.5, "investment")(0.0, SPOTS_S, SPOTS_X)
    hedge = optimal_strategy(surf, model, 0.5, "hedge")(0.0, SPOTS_S, SPOTS_X)
    assert np.allclose(claim - inv, hedge)
    assert np.allclose(inv, 0.05 / 0.25**2 / 0.5)


def test_bsde_and_pde_hedges_agree(bench):
    model, state, f = bench
    surf = _surface(f, nodes=81, steps=32)
    sol = solve_bsde(model, f, 0.5, steps=16, paths=60000, seed=4, state=state)
    d_pde = optimal_strategy(surf, model, 0.5, "hedge").delta(0.0, state.s[None], state.x[None])
    d_bsde = optimal_strategy(sol, model, 0.5, "hedge").delta(0.0, state.s[None], state.x[None])
    assert np.allclose(d_pde, d_bsde, rtol=0.05)


def test_strategy_argument_checks():
    model = cases.benchmark_model()
    with pytest.raises(ModelValidationError):
        StrategySpec("claim", model, 0.0)
    with pytest.raises(ModelValidationError):
        StrategySpec("nope", model, 0.5)
    with pytest.raises(ModelValidationError):
        optimal_strategy(_surface(cases.benchmark_payoff(), gamma=0.25, nodes=21, steps=4), model, 0.5)


def test_zero_claim_has_zero_gap(bench):
    model, state, _ = bench
    zero = P.constant(0.0, 1, 1)
    rep = verify_indifference(model, zero, 0.5, 0.0, None, state, paths=5000, steps=8, seed=1, probes=0)
    assert rep.gap == 0.0 and rep.gap_z == 0.0


def test_indifference_gap_small_at_pde_price(bench):
    model, state, f = bench
    surf = _surface(f, nodes=81, steps=32)
    price = surf.at_spot(state)
    rep = verify_indifference(model, f, 0.5, price, surf, state, paths=40000, steps=32, seed=2, probes=2)
    assert abs(rep.gap_z) < 3
    off = verify_indifference(model, f, 0.5, 1.05 * price, surf, state, paths=40000, steps=32, seed=2, probes=0)
    assert off.gap < rep.gap
    assert set(rep.to_dict()) >= {"gap", "gap_se", "gap_z", "probes"}
