import numpy as np
import pytest

from Components.Quadrature import ASSEMBLY_RULE, ERROR_RULE, RULES, exactness_error, monomial_integral, physical_points


@pytest.mark.parametrize("rule", [ASSEMBLY_RULE, ERROR_RULE], ids=lambda r: r.name)
def test_rule_is_exact_to_declared_degree(rule):
    assert exactness_error(rule) < 1e-13


@pytest.mark.parametrize("rule", [ASSEMBLY_RULE, ERROR_RULE], ids=lambda r: r.name)
def test_points_are_barycentric_and_inside(rule):
    np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, atol=1e-15)
    assert np.all(rule.points > 0.0)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_rule_sizes():
    assert ASSEMBLY_RULE.size == 7 and ASSEMBLY_RULE.degree == 5
    assert ERROR_RULE.size == 16 and ERROR_RULE.degree == 8
    assert set(RULES) == {"7-pt", "16-pt"}


def test_assembly_rule_is_not_exact_beyond_degree_five():
    assert exactness_error(ASSEMBLY_RULE, degree=6) > 1e-8


def test_monomial_integral():
    assert monomial_integral(0, 0) == pytest.approx(0.5)
    assert monomial_integral(1, 0) == pytest.approx(1.0 / 6.0)
    assert monomial_integral(1, 1) == pytest.approx(1.0 / 24.0)


def test_physical_points_map_vertices_and_centroid():
    corners = np.array([[[1.0, 1.0], [3.0, 1.0], [1.0, 2.0]]])
    pts = physical_points(corners, ERROR_RULE)
    assert pts.shape == (1, 16, 2)
    # first point of the 16-point rule is the centroid
    np.testing.assert_allclose(pts[0, 0], corners[0].mean(axis=0), atol=1e-14)
    # integrating x over the mapped triangle: area * centroid_x
    area = 1.0
    integral = 2.0 * area * np.dot(ERROR_RULE.weights, pts[0, :, 0])
    assert integral == pytest.approx(area * 5.0 / 3.0, rel=1e-13)
