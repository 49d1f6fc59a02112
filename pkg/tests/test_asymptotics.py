import json

import numpy as np
import pytest

from uiprice import asymptotics as A
from uiprice import cases, pde
from uiprice import payoff as P
from uiprice.errors import HypothesisViolation
from uiprice.mc import price_mmm
from uiprice.model import State

# Independent oracle: nested Gauss-Hermite/Gauss-Legendre integration of the
# squared gradient of the linear price for the benchmark, standalone script.
FROZEN_ZETA = 0.42534914917015626
FROZEN_P0 = 2.4684218679406955


def test_zeta_quadrature_matches_frozen_oracle(bench):
    model, state, f = bench
    assert np.isclose(A.zeta_quadrature(model, f, state), FROZEN_ZETA, rtol=1e-10)


@pytest.mark.parametrize("method", ["malliavin", "fd", "quadrature"])
def test_nested_monte_carlo_zeta_agrees(bench, method):
    model, state, f = bench
    z, se_out, se_in = A.zeta(model, f, state, inner_method=method, outer_paths=1500, inner_paths=400,
                              time_nodes=8, seed=3)
    assert abs(z - FROZEN_ZETA) < 4 * np.hypot(se_out, se_in) + 0.01 * FROZEN_ZETA


def test_expansion_residual_is_second_order(bench):
    model, state, f = bench
    grid = pde.build_grid(model, state, pde.GridSpec(nodes=81, steps=32))
    res = []
    for gamma in (0.1, 0.2):
        exp = A.expand_price(model, f, gamma, state)
        assert np.isclose(exp.p0, FROZEN_P0) and np.isclose(exp.zeta, FROZEN_ZETA)
        res.append(abs(pde.solve_uip_pde(model, f, gamma, grid).at_spot(state) - exp.price_estimate))
    assert 2.5 < res[1] / res[0] < 6.0


def test_gradient_expansion_refuses_digital():
    model = cases.burgers_model()
    with pytest.raises(HypothesisViolation):
        A.expand_gradients(model, P.digital(0, 1), 0.5, State(0.0, [], [0.0]), paths=100)


def test_gradient_expansion_at_zero_gamma_is_linear_gradient(bench):
    model, state, f = bench
    phi_x, phi_s, se_x, se_s = A.expand_gradients(model, f, 0.0, state, paths=100000, steps=4, seed=2)
    eps = 1e-4
    up = State(0.0, state.s, state.x + eps)
    dn = State(0.0, state.s, state.x - eps)
    fd = (price_mmm(model, f, up)[0] - price_mmm(model, f, dn)[0]) / (2 * eps)
    assert abs(phi_x[0] - fd) < 4 * se_x[0]


def test_lower_bound_is_exact_for_nontraded_claims():
    model = cases.nontraded_model()
    f = P.tanh_x(0, 1, offset=1.0)
    st = State(0.0, [], [0.3])
    for gamma in (0.5, 2.0):
        lb, _ = A.price_lower_bound(model, f, gamma, st)
        ce, _ = pde.certainty_equivalent(model, f, gamma, 0.0, [0.3])
        assert np.isclose(lb, ce, rtol=1e-10)


def test_lower_bound_below_price_and_monotone(bench):
    model, state, f = bench
    lbs = [A.price_lower_bound(model, f, g, state)[0] for g in (0.25, 0.5, 1.0)]
    assert np.all(np.diff(lbs) < 0) and lbs[0] < FROZEN_P0
    grid = pde.build_grid(model, state, pde.GridSpec(nodes=41, steps=16))
    assert lbs[1] < pde.solve_uip_pde(model, f, 0.5, grid).at_spot(state)


def test_bound_report(tmp_path):
    rep = A.bound_report(1.0, 1.2, 1.5, v1=0.9, v2=2.0)
    assert rep["pass"] and len(rep["rows"]) == 4
    assert np.isclose(rep["rows"][1]["margin"], 0.2)
    bad = A.bound_report(1.3, 1.2, 1.5, tol=1e-4)
    assert not bad["pass"]
    path = tmp_path / "bounds.json"
    A.bound_report_json(rep, path)
    assert json.loads(path.read_text())["pass"]
