"""Quadrature rules must integrate monomials exactly up to their degree."""

import math

import numpy as np
import pytest

from porodg.quadrature import p1_values, tet_rule, triangle_rule


def tet_monomial_integral(a, b, c):
    # int over reference tet of x^a y^b z^c = a! b! c! / (a+b+c+3)!
    return (
        math.factorial(a)
        * math.factorial(b)
        * math.factorial(c)
        / math.factorial(a + b + c + 3)
    )


def tri_monomial_integral(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 6, 7])
def test_tet_rule_exactness(degree):
    pts, w = tet_rule(degree)
    assert np.all(w > 0.0)
    assert abs(w.sum() - 1.0 / 6.0) < 1e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                approx = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c)
                assert abs(approx - tet_monomial_integral(a, b, c)) < 1e-14


@pytest.mark.parametrize("degree", [1, 2, 4, 6])
def test_triangle_rule_exactness(degree):
    pts, w = triangle_rule(degree)
    assert np.all(w > 0.0)
    assert abs(w.sum() - 0.5) < 1e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = np.sum(w * pts[:, 0] ** a * pts[:, 1] ** b)
            assert abs(approx - tri_monomial_integral(a, b)) < 1e-14


def test_points_inside_reference_domains():
    pts, _ = tet_rule(4)
    assert np.all(pts >= 0.0) and np.all(pts.sum(axis=1) <= 1.0)
    tpts, _ = triangle_rule(4)
    assert np.all(tpts >= 0.0) and np.all(tpts.sum(axis=1) <= 1.0)


def test_p1_basis_partition_of_unity_and_nodal():
    pts, _ = tet_rule(3)
    vals = p1_values(pts)
    assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-14)
    nodes = np.array([[0.0, 0.0, 0.0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert np.allclose(p1_values(nodes), np.eye(4), atol=1e-14)
