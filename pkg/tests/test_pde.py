import numpy as np
import pytest

from uiprice import cases, pde
from uiprice import payoff as P
from uiprice.errors import ModelValidationError
from uiprice.model import State

FROZEN_PDE_PRICE = 2.357883276943269  # benchmark, gamma = 0.5, 161 x 161 nodes, 64 steps


def _bench_grid(nodes=41, steps=16):
    return pde.build_grid(cases.benchmark_model(), cases.benchmark_state(), pde.GridSpec(nodes=nodes, steps=steps))


def test_constant_payoff_is_exact():
    model, st = cases.benchmark_model(), cases.benchmark_state()
    surf = pde.solve_uip_pde(model, P.constant(1.7, 1, 1), 0.5, _bench_grid())
    assert np.isclose(surf.at_spot(st), 1.7, atol=1e-12)
    phi_s, phi_x = surf.gradient(0.0, st.s[None], st.x[None])
    assert np.allclose(phi_s, 0.0, atol=1e-10) and np.allclose(phi_x, 0.0, atol=1e-10)


def test_grid_contains_spot_and_respects_limits():
    g = _bench_grid(nodes=(21, 31))
    assert g.shape == (21, 31)
    assert np.any(np.isclose(g.axes[0], 0.0)) or np.any(np.isclose(np.exp(g.axes[0]), 1.0))
    with pytest.raises(ModelValidationError):
        pde.build_grid(cases.benchmark_model(), cases.benchmark_state(), pde.GridSpec(nodes=3))


def test_black_scholes_reduction():
    model = cases.call_model()
    st = State(0.0, [1.0], [0.0])
    grid = pde.build_grid(model, st, pde.GridSpec(nodes=(161, 11), steps=32))
    surf = pde.solve_uip_pde(model, P.call(1, 1, 1.0), 1.0, grid)
    bs, _ = pde.black_scholes_call(1.0, 1.0, 0.25, 1.0)
    assert abs(surf.at_spot(st) / bs - 1) < 5e-3


def test_certainty_equivalent_reduction():
    model = cases.nontraded_model()
    f = P.tanh_x(0, 1, offset=1.0)
    st = State(0.0, [], [0.3])
    grid = pde.build_grid(model, st, pde.GridSpec(nodes=161, steps=4))
    v = pde.solve_uip_pde(model, f, 1.0, grid).at_spot(st)
    ce, _ = pde.certainty_equivalent(model, f, 1.0, 0.0, [0.3])
    assert abs(v / ce - 1) < 1e-3


def test_buy_sell_symmetry():
    model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
    grid = _bench_grid()
    buy = pde.solve_uip_pde(model, f, 0.5, grid, side="buy").at_spot(st)
    sell = pde.solve_uip_pde(model, f.negated(), 0.5, grid, side="buy").at_spot(st)
    sell_side = pde.solve_uip_pde(model, f, 0.5, grid, side="sell").at_spot(st)
    assert np.isclose(sell_side, -sell, rtol=1e-8)
    assert buy <= sell_side


def test_price_decreases_in_gamma_and_matches_frozen_value():
    model, st, f = cases.benchmark_model(), cases.benchmark_state(), cases.benchmark_payoff()
    grid = _bench_grid(nodes=81, steps=32)
    prices = [pde.solve_uip_pde(model, f, g, grid).at_spot(st) for g in (0.0, 0.25, 0.5, 1.0)]
    assert np.all(np.diff(prices) < 0)
    assert abs(prices[2] - FROZEN_PDE_PRICE) < 2e-3


def test_query_outside_grid_raises():
    surf = pde.solve_uip_pde(cases.benchmark_model(), cases.benchmark_payoff(), 0.5, _bench_grid(nodes=21, steps=4))
    with pytest.raises(ModelValidationError):
        surf.value(0.0, [[1.0]], [[50.0]])


def test_truncated_hamiltonian_matches_quadratic_inside():
    q = np.array([[0.1], [-0.5], [2.0]])
    val, delta = pde.truncated_hamiltonian(q, 0.8, m=1.0)
    assert np.allclose(val[:2], 0.5 * 0.8 * q[:2, 0] ** 2)
    assert np.allclose(delta[:2], -0.8 * q[:2])
    assert val[2] < 0.5 * 0.8 * 4.0 and np.isclose(np.abs(delta[2, 0]), 1.0)


def test_burgers_reference_solves_its_equation():
    gamma, beta, t, x, e = 0.7, 1.0, 0.4, 0.3, 1e-4
    g = lambda tt, xx: pde.burgers_reference(tt, xx, gamma, beta)  # noqa: E731
    g_t = (g(t + e, x) - g(t - e, x)) / (2 * e)
    g_x = (g(t, x + e) - g(t, x - e)) / (2 * e)
    g_xx = (g(t, x + e) - 2 * g(t, x) + g(t, x - e)) / e**2
    assert abs(g_t - (0.5 * beta**2 * g_xx - gamma * g(t, x) * g_x)) < 1e-4 or \
        abs(g_t - (0.5 * beta**2 * g_xx + gamma * g(t, x) * g_x)) < 1e-4
    assert g(t, x) <= pde.burgers_bound_constant(gamma, beta) / np.sqrt(t)
