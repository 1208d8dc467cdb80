"""Quadrature rules on the reference tetrahedron and triangle.

Rules are conical products of one-dimensional Gauss-Jacobi rules collapsed
through the Duffy map, so a rule of any polynomial exactness degree can be
generated.  Weights are positive and sum to the reference volume (1/6 for
the tetrahedron, 1/2 for the triangle).
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

# Reference P1 basis on the tetrahedron with vertices
# (0,0,0), (1,0,0), (0,1,0), (0,0,1).
P1_REF_GRADS = np.array(
    [[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)


def p1_values(points):
    """Values of the four P1 basis functions at reference points (n, 3) -> (n, 4)."""
    pts = np.asarray(points, dtype=float)
    return np.stack(
        [1.0 - pts[:, 0] - pts[:, 1] - pts[:, 2], pts[:, 0], pts[:, 1], pts[:, 2]],
        axis=-1,
    )


def _gauss_jacobi_01(n, alpha):
    """n-point Gauss-Jacobi rule for weight (1-x)^alpha on [0, 1]."""
    x, w = roots_jacobi(n, alpha, 0.0)
    # map from [-1, 1] with weight (1-x)^alpha to [0, 1]
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def tet_rule(degree):
    """Quadrature rule exact for polynomials of total degree <= degree.

    Returns (points, weights) with points (nq, 3) inside the reference
    tetrahedron and weights summing to 1/6.
    """
    if degree < 0:
        raise ValueError(f"quadrature degree must be non-negative, got {degree}")
    n = degree // 2 + 1  # 2n - 1 >= degree
    xa, wa = _gauss_jacobi_01(n, 2.0)
    xb, wb = _gauss_jacobi_01(n, 1.0)
    xc, wc = _gauss_jacobi_01(n, 0.0)
    A, B, C = np.meshgrid(xa, xb, xc, indexing="ij")
    WA, WB, WC = np.meshgrid(wa, wb, wc, indexing="ij")
    x = A
    y = B * (1.0 - A)
    z = C * (1.0 - A) * (1.0 - B)
    pts = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=-1)
    w = (WA * WB * WC).ravel()
    return pts, w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Quadrature rule on the reference triangle, exact to total degree <= degree.

    Returns (points, weights) with points (nq, 2) and weights summing to 1/2.
    """
    if degree < 0:
        raise ValueError(f"quadrature degree must be non-negative, got {degree}")
    n = degree // 2 + 1
    xa, wa = _gauss_jacobi_01(n, 1.0)
    xb, wb = _gauss_jacobi_01(n, 0.0)
    A, B = np.meshgrid(xa, xb, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    x = A
    y = B * (1.0 - A)
    pts = np.stack([x.ravel(), y.ravel()], axis=-1)
    w = (WA * WB).ravel()
    return pts, w
