"""
Quadrature rules on the reference triangle (0,0), (1,0), (0,1).

Points are stored in barycentric coordinates (l0, l1, l2) so that the
reference coordinates are (xi, eta) = (l1, l2). Weights sum to the
reference area 1/2.
"""
from dataclasses import dataclass
from itertools import permutations
from math import factorial, sqrt

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric triangle rule with a declared exactness degree"""
    name: str
    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def reference_points(self) -> np.ndarray:
        return self.points[:, 1:]


def _centroid():
    return [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]


def _orbit_21(a):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _orbit_111(a, b):
    c = 1.0 - a - b
    return sorted(set(permutations((a, b, c))))


def _build(name, degree, orbits):
    points, weights = [], []
    for orbit, weight in orbits:
        points.extend(orbit)
        weights.extend([weight] * len(orbit))
    points = np.array(points, dtype=float)
    weights = np.array(weights, dtype=float)
    # weights are tabulated for unit area
    weights = 0.5 * weights / weights.sum()
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(name=name, points=points, weights=weights, degree=degree)


_S15 = sqrt(15.0)

# 7-point degree-5 rule (Radon)
ASSEMBLY_RULE = _build("7-pt", 5, [
    (_centroid(), 9.0 / 40.0),
    (_orbit_21((6.0 - _S15) / 21.0), (155.0 - _S15) / 1200.0),
    (_orbit_21((6.0 + _S15) / 21.0), (155.0 + _S15) / 1200.0),
])

# 16-point degree-8 rule (Dunavant)
ERROR_RULE = _build("16-pt", 8, [
    (_centroid(), 0.144315607677787),
    (_orbit_21(0.459292588292723), 0.095091634267285),
    (_orbit_21(0.170569307751760), 0.103217370534718),
    (_orbit_21(0.050547228317031), 0.032458497623198),
    (_orbit_111(0.008394777409958, 0.263112829634638), 0.027230314174435),
])

RULES = {rule.name: rule for rule in (ASSEMBLY_RULE, ERROR_RULE)}


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of xi^a * eta^b over the reference triangle"""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def exactness_error(rule: QuadratureRule, degree: int = None) -> float:
    """
    Largest relative error of the rule over all monomials xi^a eta^b
    with a + b <= degree (defaults to the declared degree).
    """
    degree = rule.degree if degree is None else degree
    xi, eta = rule.reference_points.T
    worst = 0.0
    for total in range(degree + 1):
        for a in range(total + 1):
            b = total - a
            exact = monomial_integral(a, b)
            approx = float(np.dot(rule.weights, xi ** a * eta ** b))
            worst = max(worst, abs(approx - exact) / exact)
    return worst


def physical_points(vertices: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """
    Map the rule onto a batch of triangles.

    Args:
        vertices: (M, 3, 2) triangle corner coordinates

    Returns:
        (M, q, 2) quadrature points
    """
    return np.einsum("qk,mkd->mqd", rule.points, vertices)
