"""Element-by-element post-processing ``u_h*`` in ``[P_{k+1}]^2``.

``u_h*`` matches ``q_h`` in curl against ``curl W*`` and matches ``u_h`` in
its gradient moments against ``grad V*`` with ``V* = P_{k+2}``.  The
constraint pair is solved in multiplier form with unknowns
``(u*, eta, gamma)`` in ``W* x V* x P_0``; both multipliers vanish for the
exact system, so their size is a free consistency check.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = ["PostprocessOperator", "PostprocessedField", "postprocess_operator",
           "postprocess_element", "postprocess", "curl_of_postprocessed"]


@dataclass
class PostprocessOperator:
    """Saddle matrix and right-hand-side maps for one element shape."""

    matrix: np.ndarray      # (nW* + nV* + 1) square
    R_q: np.ndarray         # (nW*, nV): (q_j, curl w_i)
    R_u: np.ndarray         # (nV*, nW): (u_j, grad v_i)
    lu: tuple
    n_star: int
    n_vstar: int


@dataclass
class PostprocessedField:
    """Coefficients of ``u_h*`` in the orthonormal ``W*`` basis of each element."""

    coeffs: np.ndarray      # (ne, dim W*)
    eta_norm: np.ndarray    # (ne,) L2 norm of eta
    gamma: np.ndarray       # (ne,) value of gamma
    residual_curl: float    # max relative residual of the curl equation
    residual_grad: float    # max relative residual of the gradient equation

    @property
    def multiplier_max(self):
        return float(np.max(self.eta_norm + np.abs(self.gamma))) if len(self.gamma) else 0.0


def postprocess_operator(sp):
    """Build (and factor) the saddle system on the element carried by ``sp``."""
    rule = sp.rule
    w = rule.weights
    Ws = sp.W_star
    Vs = sp.V_star
    cW = Ws.curl(rule.points)            # (nq, nW*)
    gV = Vs.grad(rule.points)            # (nq, nV*, 2)
    Wv = Ws.values(rule.points)          # (nq, nW*, 2)
    Vv = Vs.values(rule.points)          # (nq, nV*)
    Kc = np.einsum("qi,qj,q->ij", cW, cW, w)
    G = np.einsum("qjc,qic,q->ij", gV, Wv, w)     # (grad v_j, w_i)
    m = Vv.T @ w                                  # (1, v_i)
    ns, nv = Ws.dim, Vs.dim
    a = np.zeros((ns + nv + 1, ns + nv + 1))
    a[:ns, :ns] = Kc
    a[:ns, ns:ns + nv] = G
    a[ns:ns + nv, :ns] = G.T
    a[ns:ns + nv, -1] = m
    a[-1, ns:ns + nv] = m
    R_q = np.einsum("qj,qi,q->ij", sp.V.values(rule.points), cW, w)
    R_u = np.einsum("qjc,qic,q->ij", sp.W.values(rule.points), gV, w)
    lu = sla.lu_factor(a)
    if np.abs(np.diag(lu[0])).min() <= 1e-12 * np.abs(a).max():
        raise RuntimeError("post-processing saddle matrix is singular (assembly fault)")
    return PostprocessOperator(a, R_q, R_u, lu, ns, nv)


def _solve(op, q, u):
    """Batched solve; ``q``: (m, nV), ``u``: (m, nW)."""
    rhs = np.zeros((len(q), op.matrix.shape[0]), complex)
    rhs[:, : op.n_star] = q @ op.R_q.T
    rhs[:, op.n_star: op.n_star + op.n_vstar] = u @ op.R_u.T
    x = sla.lu_solve(op.lu, rhs.T).T
    ustar = x[:, : op.n_star]
    eta = x[:, op.n_star: op.n_star + op.n_vstar]
    gamma = x[:, -1]
    # residuals of the multiplier-free equations
    a = op.matrix
    r1 = ustar @ a[: op.n_star, : op.n_star].T - rhs[:, : op.n_star]
    r2 = ustar @ a[op.n_star: op.n_star + op.n_vstar, : op.n_star].T - rhs[:, op.n_star: -1]
    s1 = np.maximum(np.linalg.norm(rhs[:, : op.n_star], axis=1), 1e-300)
    s2 = np.maximum(np.linalg.norm(rhs[:, op.n_star: -1], axis=1), 1e-300)
    res1 = np.linalg.norm(r1, axis=1) / np.maximum(s1, np.linalg.norm(ustar, axis=1))
    res2 = np.linalg.norm(r2, axis=1) / np.maximum(s2, np.linalg.norm(ustar, axis=1))
    return ustar, np.linalg.norm(eta, axis=1), gamma, res1, res2


def postprocess_element(sp, q, u, op=None):
    """Post-process one element from coefficient vectors of ``q_h`` and ``u_h``.

    Returns ``(u* coefficients, ||eta||, gamma)``.
    """
    op = op or postprocess_operator(sp)
    ustar, eta, gamma, _, _ = _solve(op, np.atleast_2d(q), np.atleast_2d(u))
    return ustar[0], float(eta[0]), complex(gamma[0])


def postprocess(sol):
    """Post-process every element of a :class:`~hdgmaxwell.solver.DiscreteSolution`."""
    disc = sol.disc
    ne = disc.mesh.n_elements
    out = None
    eta = np.zeros(ne)
    gamma = np.zeros(ne, complex)
    r1 = r2 = 0.0
    for g in disc.groups:
        op = g.cache.get("postprocess")
        if op is None:
            op = g.cache["postprocess"] = postprocess_operator(g.spaces)
        if out is None:
            out = np.zeros((ne, op.n_star), complex)
        us, en, ga, a, b = _solve(op, sol.q[g.elements], sol.u[g.elements])
        out[g.elements] = us
        eta[g.elements] = en
        gamma[g.elements] = ga
        r1 = max(r1, float(a.max()))
        r2 = max(r2, float(b.max()))
    return PostprocessedField(out, eta, gamma, r1, r2)


def curl_of_postprocessed(disc, field, e, points):
    """``curl u_h*`` on element ``e`` at physical ``points``."""
    g = disc.groups[disc.element_group[e]]
    local = np.asarray(points, float) - g.shifts[disc.element_slot[e]]
    return g.spaces.W_star.curl(local) @ field.coeffs[e]
