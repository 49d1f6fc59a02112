import numpy as np
import pytest

from uiprice import cases, pde
from uiprice import payoff as P
from uiprice.errors import ModelValidationError
from uiprice.mc import malliavin_gradient, monomial_exponents, price_mmm, solve_bsde
from uiprice.model import State

# Independent oracle: two-dimensional Gauss-Hermite integration of the benchmark
# payoff against the exact terminal law, evaluated in a standalone script.
FROZEN_P0 = 2.4684218679406955


def test_quadrature_price_matches_frozen_oracle(bench):
    model, state, f = bench
    p0, se = price_mmm(model, f, state)
    assert se == 0.0
    assert np.isclose(p0, FROZEN_P0, rtol=1e-10)


def test_monte_carlo_price_agrees_with_quadrature(bench):
    model, state, f = bench
    p, se = price_mmm(model, f, state, paths=100000, seed=5, quadrature=False)
    assert abs(p - FROZEN_P0) < 4 * se
    pa, sea = price_mmm(model, f, state, paths=100000, seed=5, quadrature=False, antithetic=True)
    assert abs(pa - FROZEN_P0) < 4 * sea


def test_price_at_maturity_is_payoff(bench):
    model, _, f = bench
    st = State(1.0, [1.3], [0.2])
    p, _ = price_mmm(model, f, st)
    assert np.isclose(p, f.func(st.s[None], st.x[None])[0])


def test_bsde_at_zero_gamma_is_linear_price(bench):
    model, state, f = bench
    sol = solve_bsde(model, f, 0.0, steps=16, paths=40000, degree=3, seed=2, state=state)
    assert abs(sol.Y0 - FROZEN_P0) < 4 * sol.Y0_se + 2e-3
    assert sol.Y.shape == (40000, 17) and sol.Z_S.shape == (40000, 16, 1)


def test_bsde_price_decreases_with_gamma(bench):
    model, state, f = bench
    ys = [solve_bsde(model, f, g, steps=16, paths=40000, seed=3, state=state).Y0 for g in (0.0, 0.5, 1.0)]
    assert ys[0] > ys[1] > ys[2]


def test_malliavin_delta_matches_black_scholes():
    model = cases.call_model()
    st = State(0.0, [1.0], [0.0])
    g = malliavin_gradient(model, P.call(1, 1, 1.0), 0.0, st, paths=200000, steps=8, seed=11)
    _, delta = pde.black_scholes_call(1.0, 1.0, 0.25, 1.0)
    assert abs(g.estimate[0] - delta) < 4 * g.se[0]
    assert abs(g.estimate[1]) < 4 * g.se[1] + 1e-3


def test_malliavin_needs_control_for_positive_gamma(bench):
    model, state, f = bench
    with pytest.raises(ModelValidationError):
        malliavin_gradient(model, f, 0.5, state, paths=1000)


@pytest.mark.parametrize("dim,deg,count", [(1, 3, 4), (2, 2, 6), (5, 3, 56)])
def test_monomial_counts(dim, deg, count):
    assert len(monomial_exponents(dim, deg)) == count
