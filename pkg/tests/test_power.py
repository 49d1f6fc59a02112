import numpy as np
import pytest
from scipy.stats import norm

from uiprice import power
from uiprice.errors import ModelValidationError
from uiprice.model import State, sample_terminal
from uiprice.payoff import constant_scarcity

PM = power.aid_2fuel()
ST = power.AID_2FUEL_STATE


def _z_law(pm, state):
    """Mean and sd of Z_T = C1_T - D_T for zero seasonal drifts."""
    tau = pm.T - state.t
    a, b = pm.alpha, pm.beta
    mean = state.x[0] * np.exp(-a[0] * tau) - state.x[2] * np.exp(-a[2] * tau)
    var = sum(b[i] ** 2 * (1 - np.exp(-2 * a[i] * tau)) / (2 * a[i]) for i in (0, 2))
    return mean, np.sqrt(var)


def test_unit_scarcity_closed_form():
    pm = power.unit_scarcity_model(PM)
    m, sd = _z_law(pm, ST)
    expected = ST.s[0] + ST.s[1] * norm.cdf(-m / sd)
    assert np.isclose(power.forward_p0(pm, ST), expected, rtol=1e-12)
    psi, dpsi = power.psi_derivatives(pm, 0.0, ST.x[None])
    assert np.allclose(psi[0], [1.0, norm.cdf(-m / sd)])
    assert np.allclose(dpsi[0, 0], 0.0, atol=1e-12)
    assert np.isclose(dpsi[0, 1, 0], -norm.pdf(m / sd) / sd * np.exp(-PM.alpha[0]), rtol=1e-10)


def test_zero_scarcity_gives_zero():
    pm = power.PowerModel(mu=PM.mu, sigma=PM.sigma, alpha=PM.alpha, beta=PM.beta, T=PM.T,
                          scarcity=constant_scarcity(0.0))
    assert power.forward_p0(pm, ST) == 0.0
    assert power.forward_zeta(pm, ST, time_nodes=4, outer_nodes=4)["zeta"] == 0.0


def test_price_matches_monte_carlo():
    s, x, _, _ = sample_terminal(PM.market, ST, 100000, seed=8)
    vals = PM.payoff.func(s, x)
    se = vals.std() / np.sqrt(vals.size)
    assert abs(power.forward_p0(PM, ST) - vals.mean()) < 4 * se


def test_gradient_matches_finite_differences():
    p_s, p_x = power.forward_gradient(PM, ST)
    h = 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (power.forward_p0(PM, State(0.0, ST.s, ST.x + e)) -
              power.forward_p0(PM, State(0.0, ST.s, ST.x - e))) / (2 * h)
        assert np.isclose(p_x[j], fd, rtol=1e-5, atol=1e-8)
    assert np.isclose(p_s @ ST.s, power.forward_p0(PM, ST))


def test_demand_derivative_mirrors_first_capacity():
    tau = PM.T
    _, dpsi = power.psi_derivatives(PM, 0.0, ST.x[None])
    ratio = np.exp(-PM.alpha[2] * tau) / np.exp(-PM.alpha[0] * tau)
    assert np.allclose(dpsi[0, :, 2], -ratio * dpsi[0, :, 0])


def test_price_is_linear_in_spreads():
    scaled = State(0.0, 2.0 * ST.s, ST.x)
    assert np.isclose(power.forward_p0(PM, scaled), 2.0 * power.forward_p0(PM, ST))


def test_zeta_is_quadratic_in_spreads():
    a = power.forward_zeta(PM, ST, time_nodes=8, outer_nodes=8)
    other = State(0.0, [0.7, 1.3], ST.x)
    b = power.forward_zeta(PM, other, time_nodes=8, outer_nodes=8)
    for key in ("a11", "a22", "a12"):
        assert np.isclose(a[key], b[key])
    assert np.isclose(b["zeta"], a["a11"] * 0.49 + a["a22"] * 1.69 + a["a12"] * 0.91)
    assert a["a11"] > 0 and a["a22"] > 0


def test_zeta_conventions_differ():
    a = power.forward_zeta(PM, ST, time_nodes=8, outer_nodes=8)
    b = power.forward_zeta(PM, ST, time_nodes=8, outer_nodes=8, convention="as_printed")
    assert not np.isclose(a["zeta"], b["zeta"], rtol=1e-3)
    with pytest.raises(ModelValidationError):
        power.forward_zeta(PM, ST, convention="other")


def test_maturity_and_model_checks():
    with pytest.raises(ModelValidationError):
        power.psi_derivatives(PM, PM.T, ST.x[None])
    with pytest.raises(ModelValidationError):
        power.PowerModel(mu=PM.mu, sigma=PM.sigma, alpha=PM.alpha, beta=[[0.2, 0.1, 0], [0, 0.2, 0], [0, 0, 0.3]],
                         T=1.0, scarcity=PM.scarcity)
    with pytest.raises(ModelValidationError):
        power.preset("unknown")


def test_uip_report_and_csv(tmp_path):
    rep = power.forward_uip(PM, 0.2, ST)
    assert np.isclose(rep["expansion"], rep["p0"] - 0.1 * rep["zeta"])
    path = tmp_path / "dec.csv"
    power.decomposition_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "quantity,value" and len(lines) == 7
