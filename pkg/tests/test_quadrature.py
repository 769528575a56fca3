from math import factorial

import numpy as np
import pytest

from errors import InvalidArgumentError, UnsupportedFeatureError
from quadrature import REFERENCE_MEASURE, quadrature_rule


def simplex_moment(exps):
    """int over the unit simplex of prod x_i^a_i."""
    n = len(exps)
    return np.prod([factorial(a) for a in exps]) / factorial(sum(exps) + n)


@pytest.mark.parametrize("entity", sorted(REFERENCE_MEASURE))
def test_weights_sum_to_measure(entity):
    rule = quadrature_rule(entity, 3)
    assert rule.weights.sum() == pytest.approx(REFERENCE_MEASURE[entity], rel=1e-14)


@pytest.mark.parametrize("degree", [0, 1, 4, 7])
def test_segment_exact(degree):
    rule = quadrature_rule("segment", degree)
    x = rule.points[:, 0]
    for n in range(degree + 1):
        assert rule.integrate(x ** n) == pytest.approx(1.0 / (n + 1), rel=1e-13)


@pytest.mark.parametrize("degree", [1, 2, 5])
def test_triangle_exact(degree):
    rule = quadrature_rule("triangle", degree)
    x, y = rule.points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert rule.integrate(x ** a * y ** b) == pytest.approx(simplex_moment((a, b)), rel=1e-12)


@pytest.mark.parametrize("degree", [1, 3, 4])
def test_tetrahedron_exact(degree):
    rule = quadrature_rule("tetrahedron", degree)
    x, y, z = rule.points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                got = rule.integrate(x ** a * y ** b * z ** c)
                assert got == pytest.approx(simplex_moment((a, b, c)), rel=1e-12)


def test_hexahedron_tensor_moments():
    rule = quadrature_rule("hexahedron", 5)
    x, y, z = rule.points.T
    assert rule.integrate(x ** 5 * y ** 2 * z) == pytest.approx(1 / 6 * 1 / 3 * 1 / 2, rel=1e-13)


def test_points_lie_inside_the_entity():
    for entity in ("triangle", "tetrahedron"):
        pts = quadrature_rule(entity, 6).points
        assert np.all(pts >= 0.0) and np.all(pts.sum(axis=1) <= 1.0)


def test_rules_are_cached_and_read_only():
    rule = quadrature_rule("quadrilateral", 4)
    assert rule is quadrature_rule("quadrilateral", 4)
    with pytest.raises(ValueError):
        rule.points[0, 0] = 1.0


def test_errors():
    with pytest.raises(UnsupportedFeatureError):
        quadrature_rule("prism", 2)
    with pytest.raises(InvalidArgumentError):
        quadrature_rule("triangle", -1)
