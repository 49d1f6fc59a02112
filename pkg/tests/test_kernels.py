import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from uiprice import kernels
from uiprice.mc import monomial_exponents
from uiprice.pde import truncated_hamiltonian

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _system(rng, n, rows):
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    return lower, diag, upper, rng.normal(size=(rows, n))


def test_tridiag_solve_matches_dense(rng):
    lower, diag, upper, rhs = _system(rng, 30, 4)
    A = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
    expected = np.linalg.solve(A, rhs.T).T
    assert np.allclose(kernels.tridiag_solve_numpy(lower, diag, upper, rhs), expected)
    assert np.allclose(kernels.tridiag_solve_numba(lower, diag, upper, rhs), expected)
    assert np.allclose(kernels.tridiag_solve(lower, diag, upper, rhs), expected)


def test_apply_tridiag_flavours_agree(rng):
    lower, diag, upper, u = _system(rng, 25, 3)
    a = kernels.apply_tridiag_numpy(lower, diag, upper, u)
    b = kernels.apply_tridiag_numba(lower, diag, upper, u)
    dense = (np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)) @ u.T
    assert np.allclose(a, b)
    assert np.allclose(a[:, 1:-1], dense.T[:, 1:-1])


@settings(max_examples=60, deadline=None)
@given(q=hnp.arrays(np.float64, (7, 2), elements=finite), gamma=st.floats(0.01, 5), m=st.floats(0.01, 20))
def test_hamiltonian_flavours_agree(q, gamma, m):
    v1, d1 = kernels.hamiltonian_field_numpy(q, gamma, m)
    v2, d2 = kernels.hamiltonian_field_numba(q, gamma, m)
    assert np.allclose(v1, v2) and np.allclose(d1, d2)


@settings(max_examples=60, deadline=None)
@given(q=hnp.arrays(np.float64, (5, 3), elements=finite), gamma=st.floats(0.01, 5), m=st.floats(0.01, 20))
def test_truncated_hamiltonian_properties(q, gamma, m):
    val, delta = truncated_hamiltonian(q, gamma, m)
    full = 0.5 * gamma * np.sum(q * q, axis=1)
    # truncation never exceeds the quadratic Hamiltonian and stays nonnegative
    assert np.all(val <= full + 1e-9) and np.all(val >= -1e-12)
    # the control lies in the ball of radius m
    assert np.all(np.linalg.norm(delta, axis=1) <= m * (1 + 1e-12))
    # Lipschitz slope bounded by m
    assert np.all(val <= m * np.linalg.norm(q, axis=1) + 1e-9)


def test_hamiltonian_saturates_for_large_m(rng):
    q = rng.normal(size=(50, 2))
    val, delta = truncated_hamiltonian(q, 0.7, np.inf)
    assert np.allclose(val, 0.35 * np.sum(q * q, axis=1))
    assert np.allclose(delta, -0.7 * q)


@settings(max_examples=30, deadline=None)
@given(z=hnp.arrays(np.float64, (6, 2), elements=st.floats(-3, 3)), degree=st.integers(0, 4))
def test_poly_features_flavours_agree(z, degree):
    exps = monomial_exponents(2, degree)
    a = kernels.poly_features_numpy(z, exps)
    b = kernels.poly_features_numba(z, exps)
    direct = np.stack([np.prod(z ** e, axis=1) for e in exps], axis=1)
    assert np.allclose(a, b) and np.allclose(a, direct)


def test_monomial_count():
    # number of monomials of total degree <= 3 in 5 variables is C(8, 3)
    assert monomial_exponents(5, 3).shape == (56, 5)
