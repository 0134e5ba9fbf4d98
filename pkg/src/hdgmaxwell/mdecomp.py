"""Numerical certificates for M-decompositions.

Ranks come from SVDs of matrices built from orthonormal bases and
normalised by the natural scale of the operator (``1/r`` for curls,
``sqrt(|dK|/|K|)`` for traces), so the singular values of interest are
O(1) or at rounding level.  A value within the guard band of the
threshold raises :class:`IndeterminateRankError` instead of guessing.
"""

from dataclasses import dataclass, fields

import numpy as np

from .families import build_family
from .polyspace import (
    RANK_TOL, IndeterminateRankError, empty_space, make_space, numerical_rank, residual_outside, span,
)

INCLUSION_TOL = 1e-10

__all__ = [
    "MDecompReport", "curl_kernel", "trace_dim", "im_index", "complement",
    "verify_conditions", "certify", "IndeterminateRankError",
]


def _singular_values(a):
    if a.size == 0:
        return np.zeros(0)
    return np.linalg.svd(a, compute_uv=False)


def curl_kernel(sp, space):
    """Orthonormal basis of ``{v in space : curl v = 0}``."""
    if space.dim == 0:
        return space
    a = sp.curl_matrix(space) / sp.curl_scale
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    s_full = np.zeros(space.dim)
    s_full[: len(s)] = s[: space.dim]
    rank = numerical_rank(s_full, RANK_TOL)
    null = vt[rank:]
    if len(null) == 0:
        return empty_space(space.dictionary, space.kind)
    flat = null @ space.coeffs.reshape(space.dim, -1)
    return span(space.dictionary, flat, space.kind, sp.rule, ref=1.0)


def trace_dim(sp, space):
    """Dimension of the tangential traces of ``space`` on the element boundary."""
    if space.dim == 0:
        return 0
    return numerical_rank(_singular_values(sp.trace_matrix(space) / sp.trace_scale), RANK_TOL)


def im_index(sp):
    """The M-index ``dim M(dK) - dim tr(curl-free V) - dim tr(curl-free W)``."""
    kv = trace_dim(sp, curl_kernel(sp, sp.V))
    kw = trace_dim(sp, curl_kernel(sp, sp.W))
    return sp.dim_M - kv - kw


def cross_gram(a, b, rule):
    """``(a_i, b_j)`` over the element for two bases of the same kind."""
    return a.weighted_values(rule).T @ b.weighted_values(rule)


def complement(sp, sub, space):
    """Orthonormal basis of the L2 complement of ``sub`` inside ``space``."""
    if sub.dim == 0:
        return space
    c = cross_gram(space, sub, sp.rule)
    u, s, _ = np.linalg.svd(c, full_matrices=True)
    rank = numerical_rank(s, RANK_TOL)
    comp = u[:, rank:].T
    if len(comp) == 0:
        return empty_space(space.dictionary, space.kind)
    flat = comp @ space.coeffs.reshape(space.dim, -1)
    return make_space(space.dictionary, flat, space.kind)


def _trace_in_M(sp, space):
    """Largest relative residual of the edge traces of ``space`` outside P_k(F)."""
    worst = 0.0
    for i, e in enumerate(sp.edges):
        vals = sp.edge_trace_values(space, i)
        if vals.shape[1] == 0:
            continue
        sw = np.sqrt(e.rule.weights)
        a = sw[:, None] * vals
        modes = sw[:, None] * sp.edge_modes(i)
        r = a - modes @ (modes.T @ a)
        scale = max(np.linalg.norm(a, axis=0).max(), 1e-300)
        worst = max(worst, np.linalg.norm(r, axis=0).max() / scale)
    return worst


def _curl_values(space):
    return lambda pts: space.curl(pts)


@dataclass
class MDecompReport:
    """Outcome of the M-decomposition checks on one element."""

    tag: str
    k: int
    shape: str
    dim_V: int
    dim_W: int
    dim_V_tilde: int
    dim_W_tilde: int
    dim_W0: int
    dim_M: int
    kernel_trace_V: int
    kernel_trace_W: int
    im_index: int
    iM1: bool
    iM2: bool
    iM4: bool
    gamma_injective_V: bool
    gamma_injective_W: bool
    trace_onto: bool
    tr_isomorphism: bool
    dimension_identity: bool
    verdict: bool
    residual_iM1: float = 0.0
    residual_iM2: float = 0.0
    sigma_min_V: float = float("nan")
    sigma_min_W: float = float("nan")
    sigma_min_tr: float = float("nan")

    def lines(self):
        """Fixed-order ``key: value`` listing."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = f"{v:.3e}"
            out.append(f"{f.name}: {v}")
        return out

    def __str__(self):
        return "\n".join(self.lines()) + "\n"


def verify_conditions(sp):
    """Check the M-decomposition conditions for the spaces attached to ``sp``."""
    rule = sp.rule
    r1 = max(_trace_in_M(sp, sp.V), _trace_in_M(sp, sp.W))
    r2 = max(
        residual_outside(_curl_values(sp.V), sp.W_tilde, rule, sp.curl_scale),
        residual_outside(_curl_values(sp.W), sp.V_tilde, rule, sp.curl_scale),
        residual_outside(sp.W_tilde.values, sp.W, rule, 1.0) if sp.W_tilde.dim else 0.0,
        residual_outside(sp.V_tilde.values, sp.V, rule, 1.0) if sp.V_tilde.dim else 0.0,
    )
    iM1 = r1 <= INCLUSION_TOL
    iM2 = r2 <= INCLUSION_TOL

    # n x mu = -p t for mu = p t, and the edge modes are orthonormal, so the
    # map mu -> n x mu is an isometry; confirm on the edge Gram matrices
    iM4 = True
    for i, e in enumerate(sp.edges):
        modes = np.sqrt(e.rule.weights)[:, None] * sp.edge_modes(i)
        iM4 &= bool(np.linalg.svd(modes, compute_uv=False).min() > 1 - 1e-8)

    Vp = complement(sp, sp.V_tilde, sp.V)
    Wp = complement(sp, sp.W_tilde, sp.W)
    tV = sp.trace_matrix(Vp, sign=-1.0) / sp.trace_scale
    tW = sp.trace_matrix(Wp) / sp.trace_scale
    sv = _singular_values(tV)
    sw = _singular_values(tW)
    inj_v = numerical_rank(sv, RANK_TOL) == Vp.dim
    inj_w = numerical_rank(sw, RANK_TOL) == Wp.dim
    both = np.concatenate([tV, tW], axis=1)
    st = _singular_values(both)
    rank_tr = numerical_rank(st, RANK_TOL) if both.size else 0
    onto = rank_tr == sp.dim_M
    square = Vp.dim + Wp.dim == sp.dim_M
    tr_iso = bool(square and onto and iM1)

    kv = trace_dim(sp, curl_kernel(sp, sp.V))
    kw = trace_dim(sp, curl_kernel(sp, sp.W))
    ident = sp.V.dim + sp.W.dim == sp.V_tilde.dim + sp.W_tilde.dim + sp.dim_M
    verdict = bool(iM1 and iM2 and iM4 and tr_iso)
    return MDecompReport(
        tag=sp.tag, k=sp.k, shape=sp.shape,
        dim_V=sp.V.dim, dim_W=sp.W.dim, dim_V_tilde=sp.V_tilde.dim,
        dim_W_tilde=sp.W_tilde.dim, dim_W0=sp.W0.dim, dim_M=sp.dim_M,
        kernel_trace_V=kv, kernel_trace_W=kw, im_index=sp.dim_M - kv - kw,
        iM1=bool(iM1), iM2=bool(iM2), iM4=bool(iM4),
        gamma_injective_V=bool(inj_v), gamma_injective_W=bool(inj_w),
        trace_onto=bool(onto), tr_isomorphism=tr_iso, dimension_identity=bool(ident),
        verdict=verdict, residual_iM1=float(r1), residual_iM2=float(r2),
        sigma_min_V=float(sv.min()) if len(sv) else float("nan"),
        sigma_min_W=float(sw.min()) if len(sw) else float("nan"),
        sigma_min_tr=float(st[: sp.dim_M].min()) if len(st) >= sp.dim_M else 0.0,
    )


def certify(tag, k, vertices):
    """Build the family on an element and return its :class:`MDecompReport`."""
    return verify_conditions(build_family(tag, k, vertices))
