import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from savflow.quadrature import collapsed_gauss, get_rule, monomial_integral


@pytest.mark.parametrize("degree", range(0, 21))
def test_rule_structure(degree):
    rule = get_rule(degree)
    assert rule.degree >= degree
    assert np.isclose(rule.weights.sum(), 0.5, rtol=0, atol=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    assert rule.points.min() >= 0.0


@given(st.integers(0, 20).flatmap(lambda d: st.tuples(st.just(d), st.integers(0, d))))
def test_monomials_integrated_exactly(pair):
    degree, a = pair
    b = degree - a
    rule = get_rule(degree)
    x, y = rule.reference_xy.T
    assert np.isclose(rule.weights @ (x ** a * y ** b), monomial_integral(a, b), rtol=1e-13, atol=0)


def test_monomial_integral_values():
    assert monomial_integral(0, 0) == 0.5
    assert np.isclose(monomial_integral(1, 0), 1 / 6)
    assert np.isclose(monomial_integral(1, 1), 1 / 24)


def test_collapsed_rule_degree_is_odd_and_sufficient():
    rule = collapsed_gauss(8)
    assert rule.degree == 9 and len(rule) == 25


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        get_rule(-1)
