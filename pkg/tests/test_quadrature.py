from math import factorial

import numpy as np
import pytest

from quadrature import MAX_DEGREE, edge_quadrature, quadrature


def _monomial_integral(a: int, b: int) -> float:
    """∫ x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_rule_integrates_monomials_exactly(degree):
    rule = quadrature(degree)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = rule.weights @ (x**a * y**b)
            exact = _monomial_integral(a, b)
            assert abs(approx - exact) <= 1e-13 * exact + 1e-16, (a, b)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_rule_points_inside_with_positive_weights(degree):
    rule = quadrature(degree)
    assert np.all(rule.weights > 0.0)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
    assert np.all(rule.barycentric >= -1e-14)
    assert np.allclose(rule.barycentric.sum(axis=1), 1.0)


def test_rule_is_symmetric():
    rule = quadrature(7)
    swapped = rule.weights @ rule.points[:, 0] ** 3
    assert swapped == pytest.approx(rule.weights @ rule.points[:, 1] ** 3, rel=1e-13)


@pytest.mark.parametrize("degree", [0, MAX_DEGREE + 1, 2.5])
def test_rule_rejects_out_of_range_degree(degree):
    with pytest.raises(ValueError):
        quadrature(degree)


def test_rules_are_read_only():
    rule = quadrature(4)
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0


def test_edge_rule_default_is_two_point():
    rule = edge_quadrature()
    assert len(rule.points) == 2
    assert rule.weights.sum() == pytest.approx(1.0)
    # cubic on [0, 1]
    assert rule.weights @ rule.points**3 == pytest.approx(0.25, rel=1e-14)


def test_edge_rule_grows_with_degree():
    rule = edge_quadrature(9)
    assert rule.weights @ rule.points**9 == pytest.approx(0.1, rel=1e-13)
