"""Gauss rules on edges, triangles and parallelograms.

Triangles use the collapsed (Duffy) square with Gauss-Legendre points in
both directions, parallelograms the affine image of the tensor rule.
All weights are positive and all points interior.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 30


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray   # (n, 2) physical points
    weights: np.ndarray  # (n,)
    degree: int
    params: np.ndarray = None  # edge rules: arclength fraction in [0, 1]


def _det(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _check_degree(degree):
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree {degree} outside supported range 0..{MAX_DEGREE}")


@lru_cache(maxsize=None)
def gauss_legendre(npts):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_rule(a, b, degree):
    _check_degree(degree)
    s, w = gauss_legendre(degree // 2 + 1)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    length = np.linalg.norm(b - a)
    pts = a + s[:, None] * (b - a)
    return QuadRule(pts, w * length, degree, s)


def triangle_rule(vertices, degree):
    _check_degree(degree)
    p0, p1, p2 = np.asarray(vertices, float)
    # the collapse adds a factor (1 - b) of degree one in b
    xa, wa = gauss_legendre(degree // 2 + 1)
    xb, wb = gauss_legendre((degree + 1) // 2 + 1)
    a, b = np.meshgrid(xa, xb, indexing="ij")
    wgt = np.outer(wa, wb) * (1.0 - b)
    xi = (a * (1.0 - b)).ravel()
    eta = b.ravel()
    pts = p0 + xi[:, None] * (p1 - p0) + eta[:, None] * (p2 - p0)
    jac = abs(_det(p1 - p0, p2 - p0))
    return QuadRule(pts, wgt.ravel() * jac, degree)


def parallelogram_rule(vertices, degree):
    _check_degree(degree)
    p0, p1, p2, p3 = np.asarray(vertices, float)
    if not np.allclose(p0 + p2, p1 + p3, atol=1e-12 * np.abs(vertices).max()):
        raise ValueError("quadrilateral is not a parallelogram")
    x, w = gauss_legendre(degree // 2 + 1)
    s, t = np.meshgrid(x, x, indexing="ij")
    pts = p0 + s.ravel()[:, None] * (p1 - p0) + t.ravel()[:, None] * (p3 - p0)
    jac = abs(_det(p1 - p0, p3 - p0))
    return QuadRule(pts, np.outer(w, w).ravel() * jac, degree)


def element_rule(vertices, degree):
    vertices = np.asarray(vertices, float)
    if len(vertices) == 3:
        return triangle_rule(vertices, degree)
    if len(vertices) == 4:
        return parallelogram_rule(vertices, degree)
    raise ValueError(f"no quadrature for a {len(vertices)}-gon")


def quad_rule(domain, degree):
    """Rule of exactness ``degree`` on an element (3 or 4 vertices) or an edge (2 points)."""
    domain = np.asarray(domain, float)
    if len(domain) == 2:
        return edge_rule(domain[0], domain[1], degree)
    return element_rule(domain, degree)
