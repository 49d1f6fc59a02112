import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uiprice.errors import ModelValidationError
from uiprice.model import (GaussianLaw, MarketModel, State, log_traded_moments, market_price_of_risk,
                           merton_weights, ou_affine, ou_conditional_moments, sample_terminal, simulate_paths,
                           time_grid, wealth_path)


def two_factor():
    return MarketModel(mu=[0.05], sigma=[[0.2]], alpha=[1.0, 0.5], beta=[[0.3, 0.0], [0.1, 0.4]], T=1.0,
                       b=[0.2, -0.1])


def test_validation_errors():
    with pytest.raises(ModelValidationError, match="sigma"):
        MarketModel(mu=[0.1, 0.1], sigma=[[1.0, 1.0], [1.0, 1.0]], alpha=[1.0], beta=[[1.0]], T=1.0)
    with pytest.raises(ModelValidationError):
        MarketModel(mu=[0.1], sigma=[[0.2]], alpha=[1.0], beta=[[0.5]], T=0.0)
    with pytest.raises(ModelValidationError):
        State(0.0, [-1.0], [0.0])
    with pytest.raises(ModelValidationError):
        State(2.0, [1.0], [0.0]).check(two_factor())
    with pytest.raises(ModelValidationError):
        GaussianLaw([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_merton_and_risk_premium():
    m = MarketModel(mu=[0.05, 0.02], sigma=[[0.2, 0.0], [0.05, 0.3]], alpha=[1.0], beta=[[0.5]], T=1.0)
    theta = market_price_of_risk(m)
    assert np.allclose(m.sigma @ theta, m.mu)
    pi = merton_weights(m, 2.0)
    assert np.allclose(m.sigma @ m.sigma.T @ pi, m.mu / 2.0)


def test_ou_moments_closed_form_one_dim():
    m = MarketModel(mu=[], sigma=np.zeros((0, 0)), alpha=[1.5], beta=[[0.4]], T=2.0, b=[0.3])
    law = ou_conditional_moments(m, 0.5, 2.0, [0.7])
    tau = 1.5
    mean = 0.7 * np.exp(-1.5 * tau) + 0.3 / 1.5 * (1 - np.exp(-1.5 * tau))
    var = 0.16 * (1 - np.exp(-3.0 * tau)) / 3.0
    assert np.allclose(law.mean, [mean]) and np.allclose(law.cov, [[var]])


def test_ou_moments_zero_alpha_is_brownian():
    m = MarketModel(mu=[], sigma=np.zeros((0, 0)), alpha=[0.0], beta=[[0.5]], T=1.0, b=[0.2])
    law = ou_conditional_moments(m, 0.0, 1.0, [1.0])
    assert np.allclose(law.mean, [1.2]) and np.allclose(law.cov, [[0.25]])


def test_ou_moments_match_simulation():
    m = two_factor()
    st0 = State(0.0, [1.0], [0.2, -0.3])
    law = ou_conditional_moments(m, 0.0, 1.0, st0.x)
    _, x, _, _ = sample_terminal(m, st0, 200000, seed=3)
    assert np.allclose(x.mean(axis=0), law.mean, atol=4 * np.sqrt(np.diag(law.cov) / 200000).max())
    assert np.allclose(np.cov(x.T), law.cov, atol=0.01 * np.max(law.cov))
    ps = simulate_paths(m, st0, "Q0", steps=8, paths=100000, seed=4)
    assert np.allclose(ps.x[:, -1].mean(axis=0), law.mean, atol=0.01)


def test_tabulated_drift_matches_constant():
    base = two_factor()
    tab = base.replace(b=np.tile([0.2, -0.1], (5, 1)), b_times=np.linspace(0, 1, 5))
    a = ou_affine(base, 0.1, 0.9)
    b = ou_affine(tab, 0.1, 0.9)
    for u, v in zip(a, b):
        assert np.allclose(u, v, atol=1e-10)


def test_traded_moments_under_both_measures():
    m = two_factor()
    q0 = log_traded_moments(m, 0.0, 1.0, [1.0], "Q0")
    p = log_traded_moments(m, 0.0, 1.0, [1.0], "P")
    assert np.allclose(q0.mean, [-0.02]) and np.allclose(p.mean, [0.03]) and np.allclose(q0.cov, [[0.04]])


def test_paths_martingale_under_q0():
    m = two_factor()
    ps = simulate_paths(m, State(0.0, [1.0], [0.0, 0.0]), "Q0", steps=10, paths=100000, seed=2)
    assert abs(ps.s[:, -1, 0].mean() - 1.0) < 4 * 0.2 / np.sqrt(100000) * 1.1
    assert ps.states.shape == (100000, 11, 3) and ps.increments.shape == (100000, 10, 3)


def test_threads_do_not_change_paths():
    m = two_factor()
    st0 = State(0.0, [1.0], [0.0, 0.0])
    a = simulate_paths(m, st0, "P", steps=5, paths=10000, seed=9, threads=1)
    b = simulate_paths(m, st0, "P", steps=5, paths=10000, seed=9, threads=3)
    assert np.array_equal(a.states, b.states)


def test_zero_strategy_wealth_is_constant():
    m = two_factor()
    ps = simulate_paths(m, State(0.0, [1.0], [0.0, 0.0]), "P", steps=4, paths=100, seed=1)
    w = wealth_path(m, lambda t, s, x: np.zeros((s.shape[0], 1)), 3.5, ps)
    assert np.allclose(w, 3.5)
    with pytest.raises(ModelValidationError):
        q0 = simulate_paths(m, State(0.0, [1.0], [0.0, 0.0]), "Q0", steps=4, paths=10, seed=1)
        wealth_path(m, lambda t, s, x: np.zeros((s.shape[0], 1)), 0.0, q0)


def test_sqrt_grid_concentrates_near_maturity():
    g = time_grid(0.0, 1.0, 8, "sqrt")
    assert g[0] == 0.0 and g[-1] == 1.0 and np.all(np.diff(g) > 0)
    assert np.diff(g)[-1] < np.diff(g)[0]


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.0, 3.0), beta=st.floats(0.05, 2.0), tau=st.floats(0.01, 3.0))
def test_ou_variance_positive_and_bounded(alpha, beta, tau):
    m = MarketModel(mu=[], sigma=np.zeros((0, 0)), alpha=[alpha], beta=[[beta]], T=tau)
    var = ou_conditional_moments(m, 0.0, tau, [0.0]).cov[0, 0]
    assert 0 < var <= beta**2 * tau * (1 + 1e-12)
