"""Local space families: V(K), W(K), M(dK) and their companions.

Each construction is identified by a tag::

    tri-pk            P_k x [P_k]^2 on triangles
    para-pk           the same on parallelograms (not M-decomposable)
    para-enriched-1   [P_k]^2 + grad span{X^(k+1) Y, X Y^(k+1)}
    para-enriched-2   ... + (Y, -X) * homogeneous P_k
    quad-qk           Q_k x [Q_k]^2 on squares (not M-decomposable)
    quad-enriched-1   [Q_k]^2 + grad span{X^(k+1) Y, X Y^(k+1)}
    quad-enriched-2   ... + span{(X^k Y^(k+1), X^(k+1) Y^k)}
    table1-row1..4    the four lowest-order examples (k = 0)

On quadrilaterals ``X, Y`` are the element's own affine coordinates,
centred and scaled to [-1, 1]; the trace argument behind the enrichments
needs them to be constant along opposite edges.  The trace space is
always n x P_k(F) per edge.

The companion spaces use the canonical choice
``V~ = curl W`` and ``W~ = curl V (+) W0`` where ``W0`` holds the
curl-free members of W with vanishing tangential trace.  Post-processing
uses ``W* = [P_{k+1}]^2`` and ``V* = P_{k+2}``.
"""

from dataclasses import dataclass, field

import numpy as np

from .mesh import edge_geometry
from .polyspace import (
    RANK_TOL, PolynomialDictionary, ScalarSpace, VectorSpace, edge_basis,
    numerical_rank, orthonormalize, scalar_poly_space, span, vector_from_scalar,
)
from .quadrature import edge_rule, element_rule


@dataclass(frozen=True)
class Construction:
    shape: str
    kmin: int
    kmax: int = 10
    decomposable: bool = True
    note: str = ""


CONSTRUCTIONS = {
    "tri-pk": Construction("triangle", 1, note="P_k on triangles requires k >= 1"),
    "para-pk": Construction("parallelogram", 1, decomposable=False,
                            note="P_k on parallelograms requires k >= 1"),
    "para-enriched-1": Construction("parallelogram", 0, note="enriched construction I requires k >= 0"),
    "para-enriched-2": Construction("parallelogram", 0, note="enriched construction II requires k >= 0"),
    "quad-qk": Construction("square", 1, decomposable=False, note="Q_k on squares requires k >= 1"),
    "quad-enriched-1": Construction("square", 1, note="square enriched construction I requires k >= 1"),
    "quad-enriched-2": Construction("square", 0, note="square enriched construction II requires k >= 0"),
    "table1-row1": Construction("triangle", 0, 0, note="lowest-order table rows have k = 0"),
    "table1-row2": Construction("triangle", 0, 0, note="lowest-order table rows have k = 0"),
    "table1-row3": Construction("square", 0, 0, note="lowest-order table rows have k = 0"),
    "table1-row4": Construction("square", 0, 0, note="lowest-order table rows have k = 0"),
}

ALIASES = {
    "para-enriched-i": "para-enriched-1", "para-enriched-ii": "para-enriched-2",
    "quad-enriched-i": "quad-enriched-1", "quad-enriched-ii": "quad-enriched-2",
    "tri-p": "tri-pk", "quad-q": "quad-qk",
}


def canonical_tag(tag):
    t = str(tag).strip().lower()
    t = ALIASES.get(t, t)
    if t not in CONSTRUCTIONS:
        raise ValueError(f"unknown construction {tag!r}; choose from {', '.join(CONSTRUCTIONS)}")
    return t


def default_degree(tag):
    c = CONSTRUCTIONS[canonical_tag(tag)]
    return c.kmin if c.kmin == c.kmax else None


def check_family(tag, k):
    """Validate a (tag, k) pair; return the canonical tag."""
    t = canonical_tag(tag)
    c = CONSTRUCTIONS[t]
    if int(k) != k or not c.kmin <= k <= c.kmax:
        raise ValueError(f"{t}: degree k={k} not supported ({c.note})")
    return t


def classify(vertices, rtol=1e-10):
    """Shape tag of a counterclockwise vertex cycle."""
    v = np.asarray(vertices, float)
    scale = np.abs(v - v.mean(0)).max()
    if len(v) == 3:
        return "triangle"
    if len(v) != 4 or not np.allclose(v[0] + v[2], v[1] + v[3], atol=rtol * scale):
        return "polygon"
    a, b = v[1] - v[0], v[3] - v[0]
    axis = (abs(a[1]) < rtol * scale and abs(b[0]) < rtol * scale) or \
           (abs(a[0]) < rtol * scale and abs(b[1]) < rtol * scale)
    if axis and abs(np.linalg.norm(a) - np.linalg.norm(b)) < rtol * scale:
        return "square"
    return "parallelogram"


def _shape_ok(required, actual):
    return actual == required or (required == "parallelogram" and actual == "square")


def dictionary_degree(tag, k):
    shape = CONSTRUCTIONS[tag].shape
    return max(k + 2, 2 * k + 1) if shape == "square" else k + 2


def affine_coords(vertices):
    """Callable mapping physical points to centred affine coordinates in [-1, 1]^2."""
    p0, p1, _, p3 = np.asarray(vertices, float)
    c = np.asarray(vertices, float).mean(0)
    jac = 0.5 * np.column_stack([p1 - p0, p3 - p0])
    inv = np.linalg.inv(jac)

    def coords(x, y):
        d = np.stack([np.asarray(x) - c[0], np.asarray(y) - c[1]])
        X = inv[0, 0] * d[0] + inv[0, 1] * d[1]
        Y = inv[1, 0] * d[0] + inv[1, 1] * d[1]
        return X, Y
    return coords


@dataclass
class LocalEdge:
    a: np.ndarray
    b: np.ndarray
    length: float
    tangent: np.ndarray
    normal: np.ndarray
    rule: object = None


@dataclass
class LocalSpaces:
    """A space family instantiated on one element (all bases L2-orthonormal)."""

    tag: str
    k: int
    shape: str
    vertices: np.ndarray
    dictionary: PolynomialDictionary
    rule: object
    edges: list
    V: ScalarSpace
    W: VectorSpace
    edge_degree: int
    V_tilde: ScalarSpace = None
    W_tilde: VectorSpace = None
    W0: VectorSpace = None
    W_star: VectorSpace = None
    V_star: ScalarSpace = None
    info: dict = field(default_factory=dict)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def dim_M(self):
        return self.n_edges * (self.edge_degree + 1)

    @property
    def area(self):
        return float(self.rule.weights.sum())

    @property
    def perimeter(self):
        return float(sum(e.length for e in self.edges))

    @property
    def curl_scale(self):
        return 1.0 / self.dictionary.scale

    @property
    def trace_scale(self):
        return np.sqrt(self.perimeter / self.area)

    def edge_trace_values(self, space, i):
        """Tangential-trace values of ``space`` on local edge ``i`` at its quadrature points.

        Scalar spaces return ``v`` (so that ``n x v = -v t``), vector spaces
        ``w . t`` (so that ``n x w x n = (w . t) t``).
        """
        e = self.edges[i]
        if space.kind == "scalar":
            return space.values(e.rule.points)
        v = space.values(e.rule.points)
        return v[..., 0] * e.tangent[0] + v[..., 1] * e.tangent[1]

    def edge_modes(self, i):
        """Orthonormal trace-mode values on edge ``i`` in local (counterclockwise) orientation."""
        e = self.edges[i]
        return edge_basis(e.rule.params, e.length, self.edge_degree)

    def trace_matrix(self, space, sign=1.0):
        """Stacked weighted tangential traces over all edges, ``(npts_total, dim)``."""
        blocks = []
        for i, e in enumerate(self.edges):
            blocks.append(np.sqrt(e.rule.weights)[:, None] * self.edge_trace_values(space, i))
        return sign * np.concatenate(blocks, axis=0)

    def curl_matrix(self, space):
        """Weighted values of the curl of each basis function, ``(npts[*2], dim)``."""
        sw = np.sqrt(self.rule.weights)
        c = space.curl(self.rule.points)
        if space.kind == "vector":
            return sw[:, None] * c
        return np.concatenate([sw[:, None] * c[..., 0], sw[:, None] * c[..., 1]], axis=0)


def _generators(tag, k, dic, vertices):
    """Raw (possibly dependent) generators of V and W as coefficient arrays."""
    shape = CONSTRUCTIONS[tag].shape
    n = dic.size
    Pk = scalar_poly_space(dic, k)
    dedupe = False
    if shape == "triangle" or tag.startswith("para") or tag in ("table1-row1", "table1-row2"):
        V = Pk.coeffs
        W = vector_from_scalar(Pk).coeffs
    else:
        coords = affine_coords(vertices)
        qk = [dic.monomial(a, b, vertices, coords) for a in range(k + 1) for b in range(k + 1)]
        V = np.array(qk)
        W = vector_from_scalar(ScalarSpace(dic, V)).coeffs

    extra = []
    loc = lambda a, b: dic.monomial(a, b)
    if tag in ("para-enriched-1", "para-enriched-2", "quad-enriched-1", "quad-enriched-2"):
        coords = affine_coords(vertices)
        for a, b in ((k + 1, 1), (1, k + 1)):
            extra.append(dic.grad(dic.monomial(a, b, vertices, coords)))
        dedupe = k == 0
    if tag == "para-enriched-2":
        # (Y, -X) times homogeneous polynomials of exact degree k
        for j in range(k + 1):
            p = loc(k - j, j)
            y = loc(0, 1)
            x = loc(1, 0)
            extra.append(np.stack([_mul(dic, y, p, vertices), -_mul(dic, x, p, vertices)]))
    if tag == "quad-enriched-2":
        coords = affine_coords(vertices)
        extra.append(np.stack([dic.monomial(k, k + 1, vertices, coords),
                               dic.monomial(k + 1, k, vertices, coords)]))
    if tag == "table1-row2":
        extra.append(np.stack([loc(0, 1), -loc(1, 0)]))
    if tag == "table1-row3":
        extra.append(np.stack([loc(0, 1), loc(1, 0)]))
    if tag == "table1-row4":
        extra.append(np.stack([loc(0, 1), loc(1, 0)]))
        extra.append(np.stack([loc(0, 1), -loc(1, 0)]))
    if extra:
        W = np.concatenate([W, np.array(extra).reshape(-1, 2, n)])
    return V, W, dedupe


def _mul(dic, a, b, vertices):
    phi_fn = lambda x, y: (dic.values(np.column_stack([x, y])) @ a) * \
                          (dic.values(np.column_stack([x, y])) @ b)
    return dic.fit(phi_fn, vertices)


def _null_space(a, threshold):
    if a.shape[1] == 0:
        return np.zeros((0, 0))
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    s_full = np.zeros(a.shape[1])
    s_full[: len(s)] = s
    rank = numerical_rank(s_full, threshold)
    return vt[rank:].T


def zero_trace_curl_free(sp, W):
    """Orthonormal basis of W0 = {w in W : curl w = 0, n x w x n = 0 on dK}."""
    a = np.concatenate([sp.curl_matrix(W) / sp.curl_scale,
                        sp.trace_matrix(W) / sp.trace_scale], axis=0)
    null = _null_space(a, RANK_TOL)
    if null.shape[1] == 0:
        return VectorSpace(sp.dictionary, np.zeros((0, 2, sp.dictionary.size)))
    return span(sp.dictionary, np.einsum("ij,jcs->ics", null.T, W.coeffs), "vector", sp.rule,
                ref=1.0)


def build_family(tag, k, vertices, companions=True, quad_degree=None):
    """Instantiate a construction on the element with the given vertex cycle.

    Raises ``ValueError`` naming the violated precondition if the element
    shape or degree does not match the construction.
    """
    tag = check_family(tag, k)
    vertices = np.asarray(vertices, float)
    required = CONSTRUCTIONS[tag].shape
    actual = classify(vertices)
    if not _shape_ok(required, actual):
        raise ValueError(f"{tag} is defined on {required} elements, got a {actual}")

    D = dictionary_degree(tag, k)
    dic = PolynomialDictionary.for_element(vertices, D)
    qdeg = quad_degree or min(30, max(2 * k + 6, 2 * D))
    rule = element_rule(vertices, qdeg)
    edges = []
    for i in range(len(vertices)):
        a, b, length, t, n = edge_geometry(vertices, i)
        edges.append(LocalEdge(a, b, length, t, n, edge_rule(a, b, qdeg)))

    V_gen, W_gen, dedupe = _generators(tag, k, dic, vertices)
    V = orthonormalize(ScalarSpace(dic, V_gen), rule)
    W = orthonormalize(VectorSpace(dic, W_gen), rule, strict=not dedupe)
    sp = LocalSpaces(tag, k, actual, vertices, dic, rule, edges, V, W, edge_degree=k)
    sp.info["generators_W"] = len(W_gen)
    if companions:
        add_companions(sp)
    return sp


def add_companions(sp):
    """Attach V~, W~, W0 and the post-processing spaces to ``sp``."""
    dic, rule = sp.dictionary, sp.rule
    # curls of an orthonormal basis have size ~ 1/r; rescale so that a zero
    # curl is recognised against an O(1) reference
    sp.V_tilde = span(dic, sp.W.curl_coeffs() / sp.curl_scale, "scalar", rule, ref=1.0)
    sp.W0 = zero_trace_curl_free(sp, sp.W)
    gens = np.concatenate([sp.V.curl_coeffs() / sp.curl_scale, sp.W0.coeffs])
    sp.W_tilde = span(dic, gens, "vector", rule, ref=1.0)
    star = scalar_poly_space(dic, sp.k + 1)
    sp.W_star = orthonormalize(vector_from_scalar(star), rule)
    sp.V_star = orthonormalize(scalar_poly_space(dic, sp.k + 2), rule)
    return sp
