"""Polynomial spaces on a physical element.

Every space is a coefficient matrix over a shared dictionary of
total-degree polynomials in the scaled, centroid-centred coordinates
``xi = (x - xc) / r``, ``eta = (y - yc) / r`` (``r`` = largest
centroid-to-vertex distance, so the element sits inside [-1, 1]^2).
The dictionary entries are products of Legendre polynomials, which
spans the same space as the monomials ``xi^a eta^b`` but keeps the
Gram matrices far better conditioned.

Differentiation acts exactly on coefficients; integration goes through
:mod:`hdgmaxwell.quadrature`.

2D curl conventions used throughout::

    curl v = dv2/dx - dv1/dy          (vector -> scalar)
    curl p = (dp/dy, -dp/dx)          (scalar -> vector)
"""

import numpy as np
from numpy.polynomial import legendre as leg

from .quadrature import QuadRule, edge_rule, element_rule

RANK_TOL = 1e-8
GUARD = 10.0


class IndeterminateRankError(RuntimeError):
    """A singular value fell inside the guard band around the rank threshold."""


def numerical_rank(singular_values, threshold):
    """Count singular values above ``threshold``; refuse to guess near it."""
    s = np.asarray(singular_values)
    ambiguous = (s > threshold / GUARD) & (s < threshold * GUARD)
    if np.any(ambiguous):
        raise IndeterminateRankError(
            f"indeterminate rank: singular value(s) {s[ambiguous]} within "
            f"{GUARD:g}x of threshold {threshold:.3e}")
    return int(np.sum(s > threshold))


class PolynomialDictionary:
    """Legendre-product dictionary of total degree ``<= degree`` on one element."""

    def __init__(self, center, scale, degree):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.degree = int(degree)
        self.exponents = [(d - b, b) for d in range(self.degree + 1) for b in range(d + 1)]
        self.index = {e: i for i, e in enumerate(self.exponents)}
        self.size = len(self.exponents)
        self.dx, self.dy = self._derivative_matrices()

    @classmethod
    def for_element(cls, vertices, degree):
        vertices = np.asarray(vertices, float)
        c = vertices.mean(axis=0)
        r = np.linalg.norm(vertices - c, axis=1).max()
        return cls(c, r, degree)

    def _derivative_matrices(self):
        n = self.degree + 1
        # column a holds the Legendre coefficients of P_a'
        d1 = np.zeros((n, n))
        for a in range(1, n):
            e = np.zeros(a + 1)
            e[a] = 1.0
            da = leg.legder(e)
            d1[: len(da), a] = da
        dx = np.zeros((self.size, self.size))
        dy = np.zeros((self.size, self.size))
        for j, (a, b) in enumerate(self.exponents):
            for c in range(a):
                if d1[c, a]:
                    dx[self.index[(c, b)], j] = d1[c, a] / self.scale
            for c in range(b):
                if d1[c, b]:
                    dy[self.index[(a, c)], j] = d1[c, b] / self.scale
        return dx, dy

    def local(self, points):
        return (np.asarray(points, float) - self.center) / self.scale

    def values(self, points):
        """Dictionary values, shape ``(npts, size)``."""
        xi = self.local(points)
        lx = leg.legvander(xi[..., 0], self.degree)
        ly = leg.legvander(xi[..., 1], self.degree)
        a = np.array([e[0] for e in self.exponents])
        b = np.array([e[1] for e in self.exponents])
        return lx[..., a] * ly[..., b]

    def fit(self, func, vertices):
        """Coefficients of a polynomial given as a callable ``func(x, y)``.

        Exact (to rounding) whenever ``func`` lies in the dictionary span.
        """
        rule = element_rule(vertices, min(2 * self.degree + 2, 30))
        phi = self.values(rule.points)
        sw = np.sqrt(rule.weights)
        vals = np.asarray(func(rule.points[:, 0], rule.points[:, 1]), float)
        coef, *_ = np.linalg.lstsq(sw[:, None] * phi, sw * vals, rcond=None)
        return coef

    def monomial(self, a, b, vertices=None, coords=None):
        """Coefficients of ``X^a Y^b`` with ``(X, Y) = coords(x, y)``.

        The default coordinates are the dictionary's own scaled ones.
        """
        if coords is None:
            coords = lambda x, y: ((x - self.center[0]) / self.scale,
                                   (y - self.center[1]) / self.scale)
        if vertices is None:
            r = self.scale
            vertices = self.center + r * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]])

        def f(x, y):
            X, Y = coords(x, y)
            return X ** a * Y ** b
        return self.fit(f, vertices)

    def grad(self, coef):
        """Vector coefficients ``(2, size)`` of the gradient of scalar ``coef``."""
        return np.stack([self.dx @ coef, self.dy @ coef])


class ScalarSpace:
    """Span of the rows of ``coeffs`` (shape ``(dim, size)``)."""

    kind = "scalar"

    def __init__(self, dictionary, coeffs):
        self.dictionary = dictionary
        self.coeffs = np.atleast_2d(np.asarray(coeffs, float)).reshape(-1, dictionary.size)

    @property
    def dim(self):
        return len(self.coeffs)

    def values(self, points):
        return self.dictionary.values(points) @ self.coeffs.T

    def grad_coeffs(self):
        d = self.dictionary
        return np.stack([self.coeffs @ d.dx.T, self.coeffs @ d.dy.T], axis=1)

    def curl_coeffs(self):
        """Vector coefficients ``(dim, 2, size)`` of ``curl p = (p_y, -p_x)``."""
        g = self.grad_coeffs()
        return np.stack([g[:, 1], -g[:, 0]], axis=1)

    def grad(self, points):
        phi = self.dictionary.values(points)
        g = self.grad_coeffs()
        return np.stack([phi @ g[:, 0].T, phi @ g[:, 1].T], axis=-1)

    def curl(self, points):
        g = self.grad(points)
        return np.stack([g[..., 1], -g[..., 0]], axis=-1)

    def weighted_values(self, rule):
        return np.sqrt(rule.weights)[:, None] * self.values(rule.points)


class VectorSpace:
    """Span of vector polynomials, ``coeffs`` of shape ``(dim, 2, size)``."""

    kind = "vector"

    def __init__(self, dictionary, coeffs):
        self.dictionary = dictionary
        self.coeffs = np.asarray(coeffs, float).reshape(-1, 2, dictionary.size)

    @property
    def dim(self):
        return len(self.coeffs)

    def values(self, points):
        phi = self.dictionary.values(points)
        return np.stack([phi @ self.coeffs[:, 0].T, phi @ self.coeffs[:, 1].T], axis=-1)

    def curl_coeffs(self):
        """Scalar coefficients ``(dim, size)`` of ``curl v = v2_x - v1_y``."""
        d = self.dictionary
        return self.coeffs[:, 1] @ d.dx.T - self.coeffs[:, 0] @ d.dy.T

    def curl(self, points):
        return self.dictionary.values(points) @ self.curl_coeffs().T

    def tangential(self, points, tangent):
        v = self.values(points)
        return v[..., 0] * tangent[0] + v[..., 1] * tangent[1]

    def weighted_values(self, rule):
        v = np.sqrt(rule.weights)[:, None, None] * self.values(rule.points)
        return np.concatenate([v[..., 0], v[..., 1]], axis=0)


def make_space(dictionary, coeffs, kind):
    return ScalarSpace(dictionary, coeffs) if kind == "scalar" else VectorSpace(dictionary, coeffs)


def gram(space, rule):
    a = space.weighted_values(rule)
    return a.T @ a


def orthonormalize(space, rule, strict=True, rtol=1e-10, ref=None):
    """L2(K)-orthonormal basis of ``span(space)``.

    A rank-revealing SVD pass drops dependent generators (an error when
    ``strict``), then two Cholesky re-orthogonalisation passes bring the
    Gram matrix to the identity at rounding level.  With ``ref`` given the
    rank is decided against the absolute scale ``ref`` (with the guard band
    of :func:`numerical_rank`), otherwise relative to the largest singular
    value.
    """
    if space.dim == 0:
        return space
    a = space.weighted_values(rule)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if ref is not None:
        keep = np.arange(len(s)) < numerical_rank(s / ref, RANK_TOL)
    else:
        keep = s > rtol * s[0] if s[0] > 0 else np.zeros(len(s), bool)
    if strict and not np.all(keep):
        raise ValueError(f"generators are linearly dependent: {np.sum(~keep)} redundant")
    if not np.any(keep):
        return empty_space(space.dictionary, space.kind)
    flat = space.coeffs.reshape(space.dim, -1)
    flat = (vt[keep] / s[keep, None]) @ flat
    out = make_space(space.dictionary, flat, space.kind)
    for _ in range(2):
        g = gram(out, rule)
        low = np.linalg.cholesky(g)
        flat = np.linalg.solve(low, out.coeffs.reshape(out.dim, -1))
        out = make_space(space.dictionary, flat, space.kind)
    return out


def empty_space(dictionary, kind):
    shape = (0, dictionary.size) if kind == "scalar" else (0, 2, dictionary.size)
    return make_space(dictionary, np.zeros(shape), kind)


def span(dictionary, coeffs, kind, rule, rtol=1e-10, ref=None):
    """Orthonormal basis of the span of possibly dependent generators.

    Pass ``ref`` (the natural size of a generator) when some generators may
    vanish identically, e.g. curls of constants.
    """
    coeffs = np.asarray(coeffs, float)
    if coeffs.size == 0:
        return empty_space(dictionary, kind)
    return orthonormalize(make_space(dictionary, coeffs, kind), rule, strict=False,
                          rtol=rtol, ref=ref)


def scalar_poly_space(dictionary, degree):
    """P_degree in the dictionary coordinates."""
    rows = [np.eye(dictionary.size)[dictionary.index[e]]
            for e in dictionary.exponents if sum(e) <= degree]
    return ScalarSpace(dictionary, np.array(rows))


def vector_from_scalar(space):
    """[S]^2 from a scalar space S."""
    c = space.coeffs
    z = np.zeros_like(c)
    return VectorSpace(space.dictionary,
                       np.concatenate([np.stack([c, z], 1), np.stack([z, c], 1)]))


# -- edges -----------------------------------------------------------------

def edge_basis(s, length, degree):
    """Legendre basis on an edge, orthonormal in arclength; ``s`` in [0, 1]."""
    v = leg.legvander(2.0 * np.asarray(s) - 1.0, degree)
    return v * np.sqrt((2 * np.arange(degree + 1) + 1) / length)


class EdgeSpace:
    """Trace space n x P_k(F) on every edge of an element.

    A trace function on edge F is ``t_F * p(s)`` with ``p`` a combination of
    :func:`edge_basis` in the edge parameter.  Only scalar coefficients are
    stored; ``n x mu = sigma p`` with ``sigma = n . (t_F rotated)`` = +/-1.
    """

    def __init__(self, degree):
        self.degree = int(degree)

    @property
    def dim_per_edge(self):
        return self.degree + 1

    def dim(self, n_edges):
        return n_edges * (self.degree + 1)

    def values(self, s, length):
        return edge_basis(s, length, self.degree)


# -- projections -------------------------------------------------------------

def project_element(space, f, rule):
    """L2(K) projection of ``f`` (callable on points, or sampled values) onto ``space``.

    ``f`` returns shape ``(npts,)`` for scalar spaces and ``(npts, 2)`` for
    vector spaces.  Works for any basis (solves with the Gram matrix).
    """
    vals = f(rule.points) if callable(f) else np.asarray(f)
    w = rule.weights
    basis = space.values(rule.points)
    if space.kind == "scalar":
        rhs = basis.T @ (w * vals)
    else:
        rhs = np.einsum("pbi,pi,p->b", basis, vals, w)
    g = gram(space, rule)
    return np.linalg.solve(g, rhs)


def project_edge(degree, a, b, g, quad_degree=None):
    """L2(F) projection of ``g`` onto the orthonormal edge basis; returns coefficients."""
    rule = edge_rule(a, b, quad_degree if quad_degree is not None else 2 * degree + 6)
    length = np.linalg.norm(np.asarray(b, float) - np.asarray(a, float))
    vals = g(rule.points) if callable(g) else np.asarray(g)
    return edge_basis(rule.params, length, degree).T @ (rule.weights * vals)


def residual_outside(space_values_fn, target, rule, ref=0.0):
    """Relative L2 residual of projecting functions onto an orthonormal ``target``.

    ``space_values_fn(points)`` returns the functions to test, stacked along
    axis 1 (scalar: ``(npts, m)``, vector: ``(npts, m, 2)``).  The residual
    is measured against the largest input norm or ``ref``, whichever is
    bigger, so that identically vanishing inputs do not amplify rounding.
    """
    vals = space_values_fn(rule.points)
    sw = np.sqrt(rule.weights)
    if vals.ndim == 2:
        a = sw[:, None] * vals
        t = target.weighted_values(rule) if target.dim else np.zeros((len(sw), 0))
    else:
        a = np.concatenate([sw[:, None] * vals[..., 0], sw[:, None] * vals[..., 1]], axis=0)
        t = target.weighted_values(rule) if target.dim else np.zeros((2 * len(sw), 0))
    if a.shape[1] == 0:
        return 0.0
    r = a - t @ (t.T @ a)
    norms = np.linalg.norm(a, axis=0)
    scale = max(norms.max(), ref, 1e-300)
    return float(np.max(np.linalg.norm(r, axis=0)) / scale)


__all__ = [
    "QuadRule", "PolynomialDictionary", "ScalarSpace", "VectorSpace", "EdgeSpace",
    "orthonormalize", "span", "gram", "scalar_poly_space", "vector_from_scalar",
    "edge_basis", "project_element", "project_edge", "numerical_rank",
    "IndeterminateRankError", "RANK_TOL",
]
