import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uiprice import payoff as P
from uiprice.errors import ModelValidationError, UIPError


def _fd(f, s, x, h=1e-6):
    gs = np.zeros(s.shape)
    gx = np.zeros(x.shape)
    for i in range(s.shape[-1]):
        e = np.zeros(s.shape[-1])
        e[i] = h
        gs[..., i] = (f(s + e, x) - f(s - e, x)) / (2 * h)
    for j in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[j] = h
        gx[..., j] = (f(s, x + e) - f(s, x - e)) / (2 * h)
    return gs, gx


@pytest.mark.parametrize("pay", [P.smooth_product(3.0), P.linear_in_s(2.0, 0.4, 0.7), P.tanh_x(1, 1, 2.0, 0.5)])
def test_declared_gradients_match_finite_differences(pay, rng):
    s = rng.uniform(0.5, 2.0, (20, 1))
    x = rng.normal(size=(20, 1))
    gs, gx = _fd(pay.func, s, x)
    assert np.allclose(pay.grad_s(s, x), gs, atol=1e-6)
    assert np.allclose(pay.grad_x(s, x), gx, atol=1e-6)


def test_evaluate_rejects_bad_input():
    f = P.call(1, 0, 1.0)
    with pytest.raises(ModelValidationError):
        f(np.array([[-1.0]]), np.zeros((1, 0)))
    bad = P.Payoff(func=lambda s, x: np.full(s.shape[:-1], np.inf), n=1, d=0)
    with pytest.raises(UIPError):
        bad(np.ones((2, 1)), np.zeros((2, 0)))


def test_forward_payoff_two_fuels():
    g = P.scarcity_power(5.0, 1.0)
    f = P.make_forward_payoff(g, 2)
    s = np.array([[1.0, 0.5], [1.0, 0.5]])
    x = np.array([[1.0, 0.8, 0.9], [1.0, 0.8, 1.2]])
    # y below c1: only the first spread; y above c1: both
    expected = [g(0.9)[()] * 1.0, g(0.6)[()] * 1.5]
    assert np.allclose(f.func(s, x), expected)
    capped = P.make_forward_payoff(g, 2, cap=1.0)
    assert np.all(capped.func(s, x) <= 1.0)
    assert f.regularity == P.DISCONTINUOUS


def test_scarcity_function_checks():
    assert P.scarcity_power(4.0, 2.0).check()
    assert P.constant_scarcity(2.0).check()
    g = P.scarcity_power(5.0, 1.0)
    assert np.allclose(g(np.array([-1.0, 0.1, 0.5])), [5.0, 5.0, 2.0])


def test_negated_payoff():
    f = P.smooth_product(2.0)
    s, x = np.array([[1.3]]), np.array([[0.2]])
    assert np.allclose(f.negated().func(s, x), -f.func(s, x))
    assert np.allclose(f.negated().grad_x(s, x), -f.grad_x(s, x))


def test_one_sided_gradients_detect_jump():
    f = P.digital(0, 1, threshold=0.0)
    g = P.one_sided_gradients(f, np.zeros(0), np.array([0.0]))
    assert g.jump
    smooth = P.one_sided_gradients(P.tanh_x(0, 1), np.zeros(0), np.array([0.3]))
    assert not smooth.jump
    assert np.allclose(smooth.f_x, 1 / np.cosh(0.3) ** 2, atol=1e-6)


def test_mollified_digital_is_monotone_and_close_away_from_locus():
    f = P.digital(0, 1)
    fl = P.mollify(f, 20.0)
    x = np.linspace(-1, 1, 401)[:, None]
    v = fl.func(np.zeros((401, 0)), x)
    # the discrete kernel turns the unit jump into a staircase of node-weight steps
    assert np.all(np.diff(v) >= -1e-12)
    assert np.max(np.diff(v)) < 0.5
    assert np.sum((v > 1e-9) & (v < 1 - 1e-9)) >= 8
    far = np.abs(x[:, 0]) > 0.1
    assert np.allclose(v[far], f.func(np.zeros((far.sum(), 0)), x[far]))
    assert np.all((v >= -1e-12) & (v <= 1 + 1e-12))


@settings(max_examples=30, deadline=None)
@given(k=st.floats(0.1, 3.0), w1=st.floats(0.0, 2.0), w2=st.floats(0.0, 2.0))
def test_spread_call_properties(k, w1, w2):
    f = P.make_spread_call(k, [w1, w2])
    s = np.array([[1.0, 1.5], [2.0, 0.5]])
    v = f.func(s, np.zeros((2, 0)))
    assert np.all(v >= 0)
    # convex and positively homogeneous of degree one in (s, K)
    f2 = P.make_spread_call(2 * k, [w1, w2])
    assert np.allclose(f2.func(2 * s, np.zeros((2, 0))), 2 * v)


def test_config_builder_errors_name_the_field():
    with pytest.raises(ModelValidationError, match="payoff.strike"):
        P.payoff_from_config({"name": "call"}, 1, 1)
    with pytest.raises(ModelValidationError, match="payoff.name"):
        P.payoff_from_config({"name": "nope"}, 1, 1)
    f = P.payoff_from_config({"name": "constant", "value": 2.0}, 1, 1)
    assert np.allclose(f.func(np.ones((3, 1)), np.zeros((3, 1))), 2.0)
