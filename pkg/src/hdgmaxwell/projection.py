"""Element-local HDG projection onto V(K) x W(K).

The projection ``(Pi_V q, Pi_W u)`` is fixed by L2 moments against the
companion spaces V~ and W~ plus one moment per trace mode of the
combination ``Pi_V q - tau n x Pi_W u`` on every edge.  The system is
square exactly when the dimension count of an M-decomposition holds.
"""

from dataclasses import dataclass

import numpy as np

from .mdecomp import complement

__all__ = ["ProjectionPair", "ProjectionError", "projection_matrix", "hdg_project",
           "decoupled_project_w"]


class ProjectionError(RuntimeError):
    """The projection system is not square or is singular (no M-decomposition)."""


@dataclass
class ProjectionPair:
    q: np.ndarray       # coefficients in the orthonormal V(K) basis
    u: np.ndarray       # coefficients in the orthonormal W(K) basis
    condition: float


def _tau(sp, tau):
    t = np.broadcast_to(np.asarray(tau, float), (sp.n_edges,))
    if np.any(t <= 0):
        raise ValueError("tau must be positive")
    return t


def _rows(sp, tau):
    """Matrix rows (test functionals) applied to the V and W bases."""
    rule = sp.rule
    w = rule.weights
    V = sp.V.values(rule.points)
    W = sp.W.values(rule.points)
    nV, nW = V.shape[1], W.shape[1]
    blocks = []
    if sp.V_tilde.dim:
        Vt = sp.V_tilde.values(rule.points)
        blocks.append(np.hstack([np.einsum("qi,qj,q->ij", Vt, V, w), np.zeros((Vt.shape[1], nW))]))
    if sp.W_tilde.dim:
        Wt = sp.W_tilde.values(rule.points)
        blocks.append(np.hstack([np.zeros((Wt.shape[1], nV)),
                                 np.einsum("qic,qjc,q->ij", Wt, W, w)]))
    for i, e in enumerate(sp.edges):
        phi = sp.edge_modes(i)
        we = e.rule.weights
        Vtr = sp.edge_trace_values(sp.V, i)
        Wtr = sp.edge_trace_values(sp.W, i)
        # n x mu = phi for mu = t phi; n x w = w . t
        blocks.append(np.hstack([np.einsum("qm,qj,q->mj", phi, Vtr, we),
                                 -tau[i] * np.einsum("qm,qj,q->mj", phi, Wtr, we)]))
    return np.vstack(blocks)


def projection_matrix(sp, tau=1.0):
    """Square projection matrix in the orthonormal bases of V(K) x W(K)."""
    a = _rows(sp, _tau(sp, tau))
    if a.shape[0] != a.shape[1]:
        raise ProjectionError(
            f"projection system is {a.shape[0]} x {a.shape[1]}: the spaces do not satisfy "
            "the M-decomposition dimension count")
    return a


def _rhs(sp, tau, q, u, shift):
    rule = sp.rule
    w = rule.weights
    pts = rule.points + shift
    qv = np.asarray(q(pts), complex)
    uv = np.asarray(u(pts), complex)
    parts = []
    if sp.V_tilde.dim:
        parts.append(sp.V_tilde.values(rule.points).T @ (w * qv))
    if sp.W_tilde.dim:
        parts.append(np.einsum("qic,qc,q->i", sp.W_tilde.values(rule.points), uv, w))
    for i, e in enumerate(sp.edges):
        ep = e.rule.points + shift
        vals = np.asarray(q(ep), complex) - tau[i] * (np.asarray(u(ep), complex) @ e.tangent)
        parts.append(sp.edge_modes(i).T @ (e.rule.weights * vals))
    return np.concatenate(parts)


def hdg_project(sp, q, u, tau=1.0, shift=(0.0, 0.0)):
    """HDG projection of the fields ``q(points)`` and ``u(points)`` on one element.

    ``shift`` translates the element carried by ``sp`` (for congruent copies).
    Raises :class:`ProjectionError` when the system is not uniquely solvable.
    """
    tau = _tau(sp, tau)
    a = projection_matrix(sp, tau)
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ProjectionError(f"projection system is singular (sigma_min/sigma_max = {s[-1] / s[0]:.1e})")
    x = np.linalg.solve(a.astype(complex), _rhs(sp, tau, q, u, np.asarray(shift, float)))
    return ProjectionPair(x[: sp.V.dim], x[sp.V.dim:], float(s[0] / s[-1]))


def decoupled_project_w(sp, curl_q, u, tau=1.0, shift=(0.0, 0.0)):
    """``Pi_W u`` from the W-only system (moments on W~, boundary balance on its complement).

    ``curl_q(points)`` returns the vector curl ``(dq/dy, -dq/dx)`` of ``q``.
    """
    tau = _tau(sp, tau)
    shift = np.asarray(shift, float)
    rule = sp.rule
    w = rule.weights
    W = sp.W.values(rule.points)
    uv = np.asarray(u(rule.points + shift), complex)
    cq = np.asarray(curl_q(rule.points + shift), complex)
    Wp = complement(sp, sp.W_tilde, sp.W)
    rows, rhs = [], []
    if sp.W_tilde.dim:
        Wt = sp.W_tilde.values(rule.points)
        rows.append(np.einsum("qic,qjc,q->ij", Wt, W, w))
        rhs.append(np.einsum("qic,qc,q->i", Wt, uv, w))
    if Wp.dim:
        Wpv = Wp.values(rule.points)
        m = np.zeros((Wp.dim, sp.W.dim))
        r = np.einsum("qic,qc,q->i", Wpv, cq, w)
        for i, e in enumerate(sp.edges):
            we = e.rule.weights
            a = sp.edge_trace_values(Wp, i)
            b = sp.edge_trace_values(sp.W, i)
            m += tau[i] * np.einsum("qi,qj,q->ij", a, b, we)
            ut = np.asarray(u(e.rule.points + shift), complex) @ e.tangent
            r = r + tau[i] * a.T @ (we * ut)
        rows.append(m)
        rhs.append(r)
    mat = np.vstack(rows)
    if mat.shape[0] != mat.shape[1]:
        raise ProjectionError("decoupled system is not square")
    return np.linalg.solve(mat.astype(complex), np.concatenate(rhs))
