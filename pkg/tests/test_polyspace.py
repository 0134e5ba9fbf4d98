import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from hdgmaxwell.polyspace import (
    GUARD, RANK_TOL, EdgeSpace, IndeterminateRankError, PolynomialDictionary, ScalarSpace,
    edge_basis, gram, numerical_rank, orthonormalize, project_edge, project_element,
    scalar_poly_space, span, vector_from_scalar,
)
from hdgmaxwell.quadrature import edge_rule, element_rule

from conftest import random_triangles

TRI = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 0.8]])


def test_derivatives_match_symbolic():
    dic = PolynomialDictionary.for_element(TRI, 4)
    x, y = sp.symbols("x y")
    f = 3 * x ** 4 - x * y ** 3 + 2 * x * y - y + 5
    coef = dic.fit(sp.lambdify((x, y), f, "numpy"), TRI)
    pts = element_rule(TRI, 6).points
    for d, var in ((dic.dx, x), (dic.dy, y)):
        want = sp.lambdify((x, y), sp.diff(f, var), "numpy")(pts[:, 0], pts[:, 1])
        np.testing.assert_allclose(dic.values(pts) @ (d @ coef), want, atol=1e-11)


def test_fit_and_monomial_are_exact_in_span():
    dic = PolynomialDictionary.for_element(TRI, 3)
    c = dic.monomial(2, 1)
    pts = element_rule(TRI, 4).points
    xi = dic.local(pts)
    np.testing.assert_allclose(dic.values(pts) @ c, xi[:, 0] ** 2 * xi[:, 1], atol=1e-13)


@given(random_triangles(), st.integers(0, 4))
def test_orthonormal_gram_is_identity(vertices, k):
    dic = PolynomialDictionary.for_element(vertices, k + 1)
    rule = element_rule(vertices, 2 * k + 4)
    V = orthonormalize(scalar_poly_space(dic, k), rule)
    W = orthonormalize(vector_from_scalar(scalar_poly_space(dic, k)), rule)
    assert V.dim == (k + 1) * (k + 2) // 2
    assert W.dim == 2 * V.dim
    np.testing.assert_allclose(gram(V, rule), np.eye(V.dim), atol=1e-12)
    np.testing.assert_allclose(gram(W, rule), np.eye(W.dim), atol=1e-12)


def test_orthonormalize_strict_rejects_dependence():
    dic = PolynomialDictionary.for_element(TRI, 2)
    rule = element_rule(TRI, 6)
    base = scalar_poly_space(dic, 1).coeffs
    dependent = ScalarSpace(dic, np.vstack([base, base[0] + 2 * base[1]]))
    with pytest.raises(ValueError, match="dependent"):
        orthonormalize(dependent, rule)
    assert orthonormalize(dependent, rule, strict=False).dim == 3


def test_span_drops_vanishing_generators():
    dic = PolynomialDictionary.for_element(TRI, 3)
    rule = element_rule(TRI, 8)
    # curls of constants vanish identically, curls of P1 are constants
    P1 = scalar_poly_space(dic, 1)
    curls = P1.curl_coeffs() * dic.scale
    sp2 = span(dic, curls, "vector", rule, ref=1.0)
    assert sp2.dim == 2
    assert span(dic, np.zeros((0, 2, dic.size)), "vector", rule).dim == 0


def test_numerical_rank_guard_band():
    assert numerical_rank([1.0, 0.5, 1e-14], RANK_TOL) == 2
    with pytest.raises(IndeterminateRankError):
        numerical_rank([1.0, RANK_TOL * 2], RANK_TOL)
    with pytest.raises(IndeterminateRankError):
        numerical_rank([1.0, RANK_TOL / 2], RANK_TOL)
    assert numerical_rank([1.0, RANK_TOL / GUARD / 2], RANK_TOL) == 1


@given(st.floats(0.01, 100.0), st.integers(0, 6))
def test_edge_basis_orthonormal(length, degree):
    rule = edge_rule([0.0, 0.0], [length, 0.0], 2 * degree + 2)
    phi = edge_basis(rule.params, length, degree)
    np.testing.assert_allclose(phi.T @ (rule.weights[:, None] * phi), np.eye(degree + 1),
                               atol=1e-12)
    assert EdgeSpace(degree).dim(3) == 3 * (degree + 1)


def test_projections_reproduce_members():
    dic = PolynomialDictionary.for_element(TRI, 3)
    rule = element_rule(TRI, 8)
    V = orthonormalize(scalar_poly_space(dic, 2), rule)
    c = np.arange(1.0, V.dim + 1)
    got = project_element(V, lambda p: V.values(p) @ c, rule)
    np.testing.assert_allclose(got, c, atol=1e-12)
    W = vector_from_scalar(scalar_poly_space(dic, 1))        # non-orthonormal basis
    cw = np.array([1.0, -2.0, 0.5, 3.0, 0.0, 1.5])
    got = project_element(W, lambda p: np.einsum("qic,i->qc", W.values(p), cw), rule)
    np.testing.assert_allclose(got, cw, atol=1e-11)
    # edge projection of s^2 onto P_2 is exact
    a, b = np.array([0.0, 0.0]), np.array([2.0, 0.0])
    coef = project_edge(2, a, b, lambda p: (p[:, 0] / 2) ** 2)
    r = edge_rule(a, b, 8)
    np.testing.assert_allclose(edge_basis(r.params, 2.0, 2) @ coef, r.params ** 2, atol=1e-13)


def test_curl_conventions():
    dic = PolynomialDictionary.for_element(TRI, 3)
    x, y = sp.symbols("x y")
    p = x ** 2 * y + 3 * y
    c = dic.fit(sp.lambdify((x, y), p, "numpy"), TRI)
    pts = element_rule(TRI, 4).points
    S = ScalarSpace(dic, c)
    vc = S.curl(pts)[:, 0, :]
    np.testing.assert_allclose(vc[:, 0], sp.lambdify((x, y), sp.diff(p, y))(*pts.T), atol=1e-12)
    np.testing.assert_allclose(vc[:, 1], -sp.lambdify((x, y), sp.diff(p, x))(*pts.T), atol=1e-12)
    # curl of the vector (0, x^2) is 2x; curl of (y, 0) is -1
    v = vector_from_scalar(ScalarSpace(dic, dic.fit(lambda X, Y: X ** 2, TRI)))
    w = vector_from_scalar(ScalarSpace(dic, dic.fit(lambda X, Y: Y, TRI)))
    np.testing.assert_allclose(v.curl(pts)[:, 1], 2 * pts[:, 0], atol=1e-12)
    np.testing.assert_allclose(w.curl(pts)[:, 0], -1.0, atol=1e-12)
