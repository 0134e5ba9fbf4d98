"""HDG discretisation, static condensation and solve.

Unknowns per element are the coefficients of ``q_h`` in V(K) and ``u_h``
in W(K); per edge the coefficients of ``u^_h = t_F lam(s)`` with ``t_F``
the global edge tangent (lower to higher vertex index) and ``lam`` in the
orthonormal Legendre basis of the global edge parameter.

Local blocks are computed once per congruence class of elements (same
shape up to translation, same penalties), in the element's own
counterclockwise edge orientation; a diagonal sign matrix ``D`` maps
global edge coefficients to local ones.  For a local tangent ``t`` and
outward normal ``n = (t2, -t1)`` we have ``n x (t p) = p`` and
``n x w = w . t``, which is all the edge terms need.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp_sparse
import scipy.sparse.linalg as spla

from .families import build_family, check_family
from .quadrature import element_rule, edge_rule

ERROR_QUAD_DEGREE = 20
PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-10


class LocalResonanceError(RuntimeError):
    """The interior (q, u) block of an element is singular."""


class GlobalResonanceError(RuntimeError):
    """The condensed trace system is singular or numerically non-unique."""


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and data of ``curl(mu^-1 curl u) - kappa^2 eps u = f``, ``n x u = g``.

    ``f(points) -> (npts, 2)`` and ``g(points, normals) -> (npts,)`` may
    return complex values; either may be ``None`` (zero data).  ``tau`` is
    a positive scalar or one value per global edge.
    """

    mu: float = 1.0
    eps: complex = 1.0
    kappa: float = math.sqrt(10.0)
    tau: object = 1.0
    f: object = None
    g: object = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if complex(self.eps).imag < 0:
            raise ValueError("eps must have a non-negative imaginary part")
        if np.any(np.asarray(self.tau, float) <= 0):
            raise ValueError("tau must be positive on every edge")

    @property
    def k2eps(self):
        return self.kappa ** 2 * complex(self.eps)

    def tau_edges(self, n_edges):
        t = np.asarray(self.tau, float)
        if t.ndim == 0:
            return np.full(n_edges, float(t))
        if t.shape != (n_edges,):
            raise ValueError(f"tau needs one value per edge ({n_edges}), got shape {t.shape}")
        return t


@dataclass
class LocalOperator:
    """Element blocks (rows = test, columns = trial) in local edge orientation.

    Interior unknowns are ``(q, u)`` stacked; trace unknowns are the edge
    modes of all local edges.  ``A_ii`` includes the ``-kappa^2 eps`` mass.
    """

    A_ii: np.ndarray
    A_il: np.ndarray
    A_li: np.ndarray
    A_ll: np.ndarray
    mass_u: np.ndarray
    n_q: int
    n_u: int
    n_l: int
    k2eps: complex = 0.0

    @property
    def B_ii(self):
        """Interior block of the bare operator B (without the kappa^2 term)."""
        b = self.A_ii.copy()
        b[self.n_q:, self.n_q:] += self.k2eps * self.mass_u
        return b

    def full(self, with_mass=True):
        return np.block([[self.A_ii if with_mass else self.B_ii, self.A_il],
                         [self.A_li, self.A_ll]])


def assemble_local(sp, mu, k2eps, tau_local):
    """Local blocks of the HDG form on the element carried by ``sp``."""
    rule = sp.rule
    w = rule.weights
    V = sp.V.values(rule.points)             # (nq, nV)
    W = sp.W.values(rule.points)             # (nq, nW, 2)
    curlV = sp.V.curl(rule.points)           # (nq, nV, 2)
    nV, nW = V.shape[1], W.shape[1]
    mv = np.einsum("qi,qj,q->ij", V, V, w)
    mw = np.einsum("qic,qjc,q->ij", W, W, w)
    C = np.einsum("qjc,qic,q->ij", curlV, W, w)   # (curl q_j, v_i)

    nm = sp.edge_degree + 1
    nl = nm * sp.n_edges
    A_rl = np.zeros((nV, nl))
    A_vl = np.zeros((nW, nl))
    A_ll = np.zeros((nl, nl))
    T = np.zeros((nW, nW))
    for i, e in enumerate(sp.edges):
        we = e.rule.weights
        phi = sp.edge_modes(i)
        Vt = sp.edge_trace_values(sp.V, i)
        Wt = sp.edge_trace_values(sp.W, i)
        tau = tau_local[i]
        blk = slice(i * nm, (i + 1) * nm)
        A_rl[:, blk] = -np.einsum("qa,qj,q->aj", Vt, phi, we)
        A_vl[:, blk] = -tau * np.einsum("qa,qj,q->aj", Wt, phi, we)
        A_ll[blk, blk] = tau * np.einsum("qa,qj,q->aj", phi, phi, we)
        T += tau * np.einsum("qa,qb,q->ab", Wt, Wt, we)

    A_ii = np.block([[mu * mv, -C.T], [C, T - k2eps * mw]]).astype(complex)
    A_il = np.vstack([A_rl, A_vl]).astype(complex)
    # <q, n x v^> = <q, lam^> and -tau <n x u, n x v^>
    A_li = np.hstack([-A_rl.T, A_vl.T]).astype(complex)
    return LocalOperator(A_ii, A_il, A_li, A_ll.astype(complex), mw, nV, nW, nl, k2eps)


def _lu_checked(a, label):
    lu, piv = sla.lu_factor(a, check_finite=True)
    d = np.abs(np.diag(lu))
    scale = np.abs(a).max()
    if d.min() <= PIVOT_TOL * scale:
        raise LocalResonanceError(
            f"local resonance on {label}: interior block pivot {d.min():.2e} below "
            f"{PIVOT_TOL:g} x block norm {scale:.2e}; refine the mesh")
    return lu, piv


@dataclass
class Condensation:
    """Per-group Schur complement and recovery operators (local orientation)."""

    lu: tuple
    Z: np.ndarray      # A_ii^-1 A_il
    S: np.ndarray      # A_ll - A_li A_ii^-1 A_il
    L: np.ndarray      # A_li A_ii^-1 (load-to-trace map)


def condense(op, label="element"):
    """Static condensation of the interior unknowns of one local operator."""
    lu = _lu_checked(op.A_ii, label)
    Z = sla.lu_solve(lu, op.A_il)
    L = sla.lu_solve(lu, op.A_li.T, trans=1).T   # A_li A_ii^-1
    S = op.A_ll - op.A_li @ Z
    return Condensation(lu, Z, S, L)


def orientation_signs(k, element_signs):
    """Per element, the ``D`` diagonal mapping global to local edge coefficients."""
    j = np.arange(k + 1)
    flip = (-1.0) ** (j + 1)
    s = np.asarray(element_signs)
    d = np.where(s[..., None] > 0, 1.0, flip)
    return d.reshape(*s.shape[:-1], -1)


@dataclass
class Group:
    spaces: object
    elements: np.ndarray
    shifts: np.ndarray      # element centroid minus representative centroid
    tau_local: tuple
    op: LocalOperator = None
    cond: Condensation = None
    cache: dict = field(default_factory=dict)


class Discretization:
    """Mesh plus local spaces, grouped by congruence class."""

    def __init__(self, mesh, tag, k, tau=1.0, decimals=9):
        self.tag = check_family(tag, k)
        self.k = int(k)
        self.mesh = mesh
        self.tau = ProblemSpec(tau=tau).tau_edges(mesh.n_edges)
        self.nm = self.k + 1
        cents = mesh.centroids()
        keys = {}
        order = []
        for e in range(mesh.n_elements):
            verts = mesh.element_vertices(e)
            scale = mesh.h_elements[e]
            off = np.round((verts - cents[e]) / scale, decimals) + 0.0
            taus = tuple(np.round(self.tau[mesh.element_edges[e]], 12))
            key = (mesh.shapes[e], round(scale, 12), off.tobytes(), taus)
            if key not in keys:
                keys[key] = len(order)
                order.append([])
            order[keys[key]].append(e)
        self.groups = []
        self.element_group = np.empty(mesh.n_elements, int)
        self.element_slot = np.empty(mesh.n_elements, int)
        for gi, elems in enumerate(order):
            elems = np.array(elems)
            rep = elems[0]
            spaces = build_family(self.tag, self.k, mesh.element_vertices(rep))
            shifts = cents[elems] - cents[rep]
            self.groups.append(Group(spaces, elems, shifts, tuple(self.tau[mesh.element_edges[rep]])))
            self.element_group[elems] = gi
            self.element_slot[elems] = np.arange(len(elems))
        sp0 = self.groups[0].spaces
        self.dim_V = sp0.V.dim
        self.dim_W = sp0.W.dim
        self.signs = orientation_signs(self.k, mesh.element_signs)  # (ne, nl)
        self.edge_dofs = (mesh.element_edges[:, :, None] * self.nm
                          + np.arange(self.nm)).reshape(mesh.n_elements, -1)

    @property
    def n_trace(self):
        return self.mesh.n_edges * self.nm

    def spaces(self, e):
        return self.groups[self.element_group[e]].spaces

    def operators(self, mu, k2eps):
        """Local operators per group (cached on the coefficients)."""
        key = (float(mu), complex(k2eps))
        for g in self.groups:
            if g.cache.get("op_key") != key:
                g.op = assemble_local(g.spaces, mu, k2eps, g.tau_local)
                g.cond = None
                g.cache["op_key"] = key
        return [g.op for g in self.groups]

    def condensations(self, mu, k2eps):
        self.operators(mu, k2eps)
        for g in self.groups:
            if g.cond is None:
                g.cond = condense(g.op, label=f"element {g.elements[0]}")
        return [g.cond for g in self.groups]

    # -- data ------------------------------------------------------------
    def load(self, f):
        """``(f, v_i)`` per element, shape ``(ne, dim_W)`` (complex)."""
        out = np.zeros((self.mesh.n_elements, self.dim_W), complex)
        if f is None:
            return out
        for g in self.groups:
            rule = g.spaces.rule
            pts = rule.points[None] + g.shifts[:, None]
            fv = np.asarray(f(pts.reshape(-1, 2)), complex).reshape(len(g.elements), -1, 2)
            W = g.spaces.W.values(rule.points)
            out[g.elements] = np.einsum("eqc,qic,q->ei", fv, W, rule.weights)
        return out

    def boundary_trace(self, g):
        """Global-orientation coefficients of ``P_M g`` on every boundary edge."""
        lam = np.zeros((self.mesh.n_edges, self.nm), complex)
        if g is None:
            return lam
        cents = self.mesh.centroids()
        for f, recs in enumerate(self.mesh.edge_elements()):
            if len(recs) != 1:
                continue
            e, i = recs[0]
            sp = self.spaces(e)
            edge = sp.edges[i]
            shift = cents[e] - sp.dictionary.center
            pts = edge.rule.points + shift
            normals = np.broadcast_to(edge.normal, pts.shape)
            vals = np.asarray(g(pts, normals), complex)
            loc = sp.edge_modes(i).T @ (edge.rule.weights * vals)
            lam[f] = loc * self.signs[e, i * self.nm:(i + 1) * self.nm]
        return lam


@dataclass
class CondensedSystem:
    matrix: sp_sparse.csc_matrix
    rhs: np.ndarray
    interior_dofs: np.ndarray     # global trace dof of each unknown
    boundary_values: np.ndarray   # (n_trace,) fixed boundary coefficients, zero elsewhere
    disc: Discretization
    problem: ProblemSpec
    loads: np.ndarray


@dataclass
class DiscreteSolution:
    """Coefficients of (q_h, u_h, u^_h) and solver diagnostics."""

    disc: Discretization
    problem: ProblemSpec
    q: np.ndarray       # (ne, dim V)
    u: np.ndarray       # (ne, dim W)
    lam: np.ndarray     # (n_edges, k+1), global orientation
    diagnostics: dict = field(default_factory=dict)

    def local_trace(self, e):
        """Local-orientation edge coefficients of element ``e``."""
        d = self.disc
        return self.lam.reshape(-1)[d.edge_dofs[e]] * d.signs[e]


def assemble_global(disc, problem):
    """Condensed trace system over interior-edge modes, boundary traces eliminated."""
    mesh = disc.mesh
    conds = disc.condensations(problem.mu, problem.k2eps)
    loads = disc.load(problem.f)
    lam_b = disc.boundary_trace(problem.g).reshape(-1)
    is_bdof = np.repeat(mesh.boundary, disc.nm)
    interior = np.flatnonzero(~is_bdof)
    index = -np.ones(disc.n_trace, int)
    index[interior] = np.arange(len(interior))

    rows, cols, vals = [], [], []
    rhs_full = np.zeros(disc.n_trace, complex)
    nq = disc.dim_V
    for g, c in zip(disc.groups, conds):
        el = g.elements
        d = disc.signs[el]                               # (m, nl)
        dofs = disc.edge_dofs[el]                        # (m, nl)
        S = c.S[None] * d[:, :, None] * d[:, None, :]    # D S D
        b_i = np.zeros((len(el), nq + disc.dim_W), complex)
        b_i[:, nq:] = loads[el]
        r = -(b_i @ c.L.T) * d                           # -D A_li A_ii^-1 b_i
        # move known boundary traces to the right-hand side
        r -= np.einsum("eab,eb->ea", S, lam_b[dofs])
        np.add.at(rhs_full, dofs.ravel(), r.ravel())
        rows.append(np.repeat(dofs, dofs.shape[1], axis=1).ravel())
        cols.append(np.tile(dofs, (1, dofs.shape[1])).ravel())
        vals.append(S.reshape(len(el), -1).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = (index[rows] >= 0) & (index[cols] >= 0)
    n = len(interior)
    mat = sp_sparse.coo_matrix((vals[keep], (index[rows[keep]], index[cols[keep]])),
                               shape=(n, n)).tocsc()
    mat.sum_duplicates()
    bvals = np.where(is_bdof, lam_b, 0)
    return CondensedSystem(mat, rhs_full[interior], interior, bvals, disc, problem, loads)


def _factor_checked(mat):
    if mat.shape[0] == 0:
        return None
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise GlobalResonanceError(f"global resonance or non-unique discrete solution: {exc}") from exc
    u = np.abs(lu.U.diagonal())
    if u.min() <= 1e-13 * u.max():
        raise GlobalResonanceError(
            f"global resonance or non-unique discrete solution: pivot ratio {u.min() / u.max():.2e}")
    return lu


def recover(system, lam_full):
    """Element fields from the full vector of global trace coefficients."""
    disc = system.disc
    nq = disc.dim_V
    q = np.zeros((disc.mesh.n_elements, nq), complex)
    u = np.zeros((disc.mesh.n_elements, disc.dim_W), complex)
    for g in disc.groups:
        c = g.cond
        el = g.elements
        loc = lam_full[disc.edge_dofs[el]] * disc.signs[el]
        b_i = np.zeros((len(el), nq + disc.dim_W), complex)
        b_i[:, nq:] = system.loads[el]
        x = sla.lu_solve(c.lu, b_i.T).T - loc @ c.Z.T
        q[el] = x[:, :nq]
        u[el] = x[:, nq:]
    return q, u


def solve(system):
    """Factor and solve the condensed system, then recover element fields."""
    disc = system.disc
    lu = _factor_checked(system.matrix)
    lam_full = system.boundary_values.astype(complex).copy()
    res = 0.0
    if lu is not None:
        x = lu.solve(system.rhs)
        r = system.matrix @ x - system.rhs
        scale = max(np.linalg.norm(system.rhs), np.finfo(float).tiny)
        res = float(np.linalg.norm(r) / scale) if np.linalg.norm(system.rhs) else float(np.linalg.norm(r))
        if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
            raise GlobalResonanceError(
                f"global resonance or non-unique discrete solution: relative residual {res:.2e}")
        lam_full[system.interior_dofs] = x
        piv = np.abs(lu.U.diagonal())
        pivots = {"min": float(piv.min()), "max": float(piv.max())}
    else:
        pivots = {"min": float("nan"), "max": float("nan")}
    q, u = recover(system, lam_full)
    sol = DiscreteSolution(disc, system.problem, q, u, lam_full.reshape(-1, disc.nm))
    sol.diagnostics.update(residual=res, pivots=pivots, n_unknowns=int(system.matrix.shape[0]),
                           nnz=int(system.matrix.nnz))
    sol.diagnostics["flux_residual"] = flux_residual(sol)
    return sol


def solve_problem(mesh, tag, k, problem):
    """Convenience wrapper: discretise, assemble, solve."""
    disc = Discretization(mesh, tag, k, tau=problem.tau)
    return solve(assemble_global(disc, problem))


# -- monolithic reference, B evaluation, diagnostics ----------------------------

def _element_dofs(disc):
    """Global dof layout of the uncondensed system: all q, all u, then traces."""
    ne = disc.mesh.n_elements
    nq, nu = disc.dim_V, disc.dim_W
    q = np.arange(ne * nq).reshape(ne, nq)
    u = ne * nq + np.arange(ne * nu).reshape(ne, nu)
    lam = ne * (nq + nu) + disc.edge_dofs
    return np.hstack([q, u, lam]), ne * (nq + nu) + disc.n_trace


def global_operator(disc, mu, k2eps, with_mass=True):
    """Sparse matrix of the full (q, u, u^) form in global orientation."""
    disc.operators(mu, k2eps)
    dofs, n = _element_dofs(disc)
    rows, cols, vals = [], [], []
    ni = disc.dim_V + disc.dim_W
    for g in disc.groups:
        a = g.op.full(with_mass)
        for e in g.elements:
            p = np.concatenate([np.ones(ni), disc.signs[e]])
            ae = a * p[:, None] * p[None, :]
            rows.append(np.repeat(dofs[e], len(p)))
            cols.append(np.tile(dofs[e], len(p)))
            vals.append(ae.ravel())
    mat = sp_sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


def pack(disc, q, u, lam):
    """Flatten (q, u, lam) into the monolithic vector layout."""
    return np.concatenate([np.ravel(q), np.ravel(u), np.ravel(lam)])


def unpack(disc, x):
    ne = disc.mesh.n_elements
    nq, nu = disc.dim_V, disc.dim_W
    q = x[: ne * nq].reshape(ne, nq)
    u = x[ne * nq: ne * (nq + nu)].reshape(ne, nu)
    lam = x[ne * (nq + nu):].reshape(-1, disc.nm)
    return q, u, lam


def solve_monolithic(disc, problem):
    """Solve the uncondensed system directly (reference for small meshes)."""
    mat = global_operator(disc, problem.mu, problem.k2eps).tolil()
    ne = disc.mesh.n_elements
    nq, nu = disc.dim_V, disc.dim_W
    rhs = np.zeros(mat.shape[0], complex)
    loads = disc.load(problem.f)
    rhs[ne * nq: ne * (nq + nu)] = loads.ravel()
    lam_b = disc.boundary_trace(problem.g).reshape(-1)
    off = ne * (nq + nu)
    for f in np.flatnonzero(disc.mesh.boundary):
        for j in range(disc.nm):
            r = off + f * disc.nm + j
            mat.rows[r] = [r]
            mat.data[r] = [1.0]
            rhs[r] = lam_b[f * disc.nm + j]
    x = spla.spsolve(mat.tocsc(), rhs)
    q, u, lam = unpack(disc, x)
    return DiscreteSolution(disc, problem, q, u, lam)


def apply_b(disc, x, y, mu=1.0):
    """``B(x; y)`` for monolithic coefficient vectors (complex inner products)."""
    mat = global_operator(disc, mu, 0.0, with_mass=False)
    return complex(np.vdot(y, mat @ x))


def flux_residual(sol):
    """Relative residual of the discrete flux continuity on interior edge modes."""
    disc = sol.disc
    p = sol.problem
    mat = global_operator(disc, p.mu, p.k2eps)
    x = pack(disc, sol.q, sol.u, sol.lam)
    off = disc.mesh.n_elements * (disc.dim_V + disc.dim_W)
    rows = off + np.flatnonzero(np.repeat(~disc.mesh.boundary, disc.nm))
    sub = mat[rows]
    r = sub @ x
    scale = np.abs(sub).multiply(np.abs(x)[None, :]).sum(axis=1).A.ravel()
    if len(r) == 0:
        return 0.0
    return float(np.abs(r).max() / max(scale.max(), np.finfo(float).tiny))


def consistency_functional(disc, problem, q_fn, curl_q_fn, u_fn):
    """``B(q, u, u|_E; test) - kappa^2 eps (u, v) - (f, v)`` for exact fields, per test dof.

    The exact trace makes the stabilisation vanish; what remains is a
    quadrature-level quantity for a consistent scheme.  Returns the vector
    in the monolithic layout (q rows, u rows, trace rows).
    """
    ne = disc.mesh.n_elements
    nq, nu = disc.dim_V, disc.dim_W
    out_q = np.zeros((ne, nq), complex)
    out_u = np.zeros((ne, nu), complex)
    out_l = np.zeros(disc.n_trace, complex)
    loads = disc.load(problem.f)
    cents = disc.mesh.centroids()
    for g in disc.groups:
        sp = g.spaces
        rule = sp.rule
        V = sp.V.values(rule.points)
        W = sp.W.values(rule.points)
        cV = sp.V.curl(rule.points)
        for slot, e in enumerate(g.elements):
            s = g.shifts[slot]
            pts = rule.points + s
            qv = np.asarray(q_fn(pts), complex)
            uv = np.asarray(u_fn(pts), complex)
            cq = np.asarray(curl_q_fn(pts), complex)
            w = rule.weights
            out_q[e] = problem.mu * (V.T @ (w * qv)) - np.einsum("qc,qic,q->i", uv, cV, w)
            out_u[e] = np.einsum("qc,qic,q->i", cq, W, w) \
                - problem.k2eps * np.einsum("qc,qic,q->i", uv, W, w) - loads[e]
            for i, edge in enumerate(sp.edges):
                ep = edge.rule.points + s
                we = edge.rule.weights
                ut = np.asarray(u_fn(ep), complex) @ edge.tangent      # n x u
                Vt = sp.edge_trace_values(sp.V, i)
                out_q[e] -= Vt.T @ (we * ut)
                phi = sp.edge_modes(i)
                blk = slice(i * disc.nm, (i + 1) * disc.nm)
                contrib = phi.T @ (we * np.asarray(q_fn(ep), complex))   # <q, n x v^>
                out_l[disc.edge_dofs[e][blk]] += contrib * disc.signs[e][blk]
    return pack(disc, out_q, out_u, out_l)
