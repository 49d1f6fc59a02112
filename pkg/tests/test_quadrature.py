import numpy as np
import pytest

from uiprice.errors import QuadratureError
from uiprice.model import GaussianLaw
from uiprice.quadrature import (check_refinement, gaussian_expectation, hermite_rule, log_expectation_exp,
                                piecewise_legendre)


def test_hermite_moments():
    z, w = hermite_rule(20)
    assert np.isclose(w.sum(), 1.0)
    assert np.isclose(w @ z**2, 1.0) and np.isclose(w @ z**4, 3.0)


def test_gaussian_expectation_of_exponential():
    law = GaussianLaw([0.1, -0.2], [[0.04, 0.01], [0.01, 0.09]])
    v = gaussian_expectation(lambda p: np.exp(p[:, 0] + p[:, 1]), law, 24)
    assert np.isclose(v, np.exp(-0.1 + 0.5 * (0.04 + 0.09 + 0.02)))


def test_log_expectation_exp_is_stable():
    terms = np.array([1000.0, 1000.0])
    assert np.isclose(log_expectation_exp(terms), 1000.0)
    assert np.isclose(log_expectation_exp(np.log([1.0, 3.0]), np.array([0.5, 0.5])), np.log(2.0))


def test_piecewise_legendre_with_kink():
    v = piecewise_legendre(lambda x: np.abs(x - 0.3), [-1.0, 0.3, 1.0], 16)
    assert np.isclose(v, 0.5 * 1.3**2 + 0.5 * 0.7**2)


def test_refinement_check():
    assert check_refinement(1.0, 1.0 + 1e-9) == 1.0 + 1e-9
    with pytest.raises(QuadratureError):
        check_refinement(1.0, 1.1)
