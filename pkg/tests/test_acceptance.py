"""Acceptance criteria 1-10.

Each criterion prints one ``criterion N: PASS|FAIL|WARN ...`` line to the
terminal (outside pytest's capture), then asserts.  Run with::

    pytest tests/test_acceptance.py -v
"""

import time
import warnings
from math import comb

import numpy as np
import pytest

from hdgmaxwell.analysis import manufactured_solution, run_convergence_study
from hdgmaxwell.families import CONSTRUCTIONS, build_family
from hdgmaxwell.mdecomp import certify, im_index
from hdgmaxwell.mesh import MESH_BUILDERS, mesh_from_elements
from hdgmaxwell.postprocess import postprocess
from hdgmaxwell.projection import decoupled_project_w, hdg_project, projection_matrix
from hdgmaxwell.solver import (
    Discretization, apply_b, assemble_global, pack, solve, solve_monolithic,
)

from conftest import certified_pairs, random_field_coeffs, reference_vertices, scalar_eval, vector_eval

RATE_BAND = 0.15
RATE_KEYS = ("u", "q", "curl_u", "curl_ustar")
ENRICHED = ("para-enriched-1", "para-enriched-2", "quad-enriched-1", "quad-enriched-2")
MESH_FAMILIES = ("tri-pk",) + ENRICHED

# every convergence study of this module, for criterion 10
_STUDIES = {}


def announce(capsys, number, status, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {status} {detail}")


def study(tag, k, levels):
    key = (tag, k, tuple(levels))
    if key not in _STUDIES:
        _STUDIES[key] = run_convergence_study(tag, k, levels)
    return _STUDIES[key]


def targets(k):
    return {"u": k + 1, "q": k + 1, "curl_u": k, "curl_ustar": k + 1}


def rate_check(report):
    """``(ok, text)`` for the finest-pair rates of ``report``."""
    rates = report.finest_rates()
    want = targets(report.k)
    bad = [key for key in RATE_KEYS if abs(rates[key] - want[key]) > RATE_BAND]
    text = " ".join(f"{key}={rates[key]:.3f}/{want[key]}" for key in RATE_KEYS)
    return not bad, text, bad


def refined_rates(tag, k, n):
    """Rates at the next pair ``(n, 2n)``, printed for context only."""
    rep = run_convergence_study(tag, k, [n, 2 * n])
    return " ".join(f"{key}={rep.finest_rates()[key]:.3f}" for key in RATE_KEYS)


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_m_index(capsys):
    start = time.perf_counter()
    cases = [("tri-pk", k, 0) for k in (1, 2, 3)]
    cases += [("para-pk", k, 2) for k in (1, 2)]
    cases += [("quad-qk", k, 2) for k in (1, 2)]
    cases += [(tag, k, 0) for tag in ENRICHED for k in (1, 2)]
    got = {}
    for tag, k, _ in cases:
        got[(tag, k)] = im_index(build_family(tag, k, reference_vertices(CONSTRUCTIONS[tag].shape)))
    elapsed = time.perf_counter() - start
    wrong = [(t, k, got[(t, k)], want) for t, k, want in cases if got[(t, k)] != want]
    ok = not wrong and elapsed < 5.0
    announce(capsys, 1, "PASS" if ok else "FAIL",
             f"{len(cases)} index values, mismatches {wrong}, {elapsed:.2f} s")
    assert not wrong
    assert elapsed < 5.0


# -- 2 ---------------------------------------------------------------------------

def test_criterion_2_dimension_identity(capsys):
    failures = []
    for tag, k in certified_pairs(3):
        sp = build_family(tag, k, reference_vertices(CONSTRUCTIONS[tag].shape))
        lhs = sp.V.dim + sp.W.dim
        rhs = sp.V_tilde.dim + sp.W_tilde.dim + sp.dim_M
        if lhs != rhs:
            failures.append((tag, k, lhs, rhs))
    for k in (1, 2, 3):
        w0 = build_family("tri-pk", k, reference_vertices("triangle")).W0.dim
        if w0 != comb(k, 2):
            failures.append(("tri-pk W0", k, w0, comb(k, 2)))
        w0 = build_family("para-enriched-1", k, reference_vertices("parallelogram")).W0.dim
        if w0 != comb(k - 1, 2):
            failures.append(("para-enriched-1 W0", k, w0, comb(k - 1, 2)))
    announce(capsys, 2, "FAIL" if failures else "PASS",
             f"{len(certified_pairs(3))} families checked, failures {failures}")
    assert not failures


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_lowest_order_certificates(capsys):
    verdicts = {}
    for row in range(1, 5):
        tag = f"table1-row{row}"
        verdicts[tag] = certify(tag, 0, reference_vertices(CONSTRUCTIONS[tag].shape)).verdict
    ok = all(verdicts.values())
    announce(capsys, 3, "PASS" if ok else "FAIL", str(verdicts))
    assert ok


# -- 4 and 5 ---------------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2])
def test_criterion_4_triangle_rates(capsys, k):
    start = time.perf_counter()
    rep = study("tri-pk", k, [8, 16, 32, 64])
    elapsed = time.perf_counter() - start
    ok, text, bad = rate_check(rep)
    ok = ok and not rep.skipped and elapsed <= 300
    detail = f"[tri-pk k={k}] n=32->64 {text}, {elapsed:.1f} s"
    if bad:
        detail += f"; outside band: {bad}; n=64->128 for context: {refined_rates('tri-pk', k, 64)}"
    announce(capsys, 4, "PASS" if ok else "FAIL", detail)
    assert not rep.skipped
    assert elapsed <= 300
    assert not bad, detail


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("tag", ENRICHED)
def test_criterion_5_enriched_rates(capsys, tag, k):
    rep = study(tag, k, [16, 32, 64])
    ok, text, bad = rate_check(rep)
    ok = ok and not rep.skipped
    detail = f"[{tag} k={k}] n=32->64 {text}"
    if bad:
        detail += f"; outside band: {bad}; n=64->128 for context: {refined_rates(tag, k, 64)}"
    announce(capsys, 5, "PASS" if ok else "FAIL", detail)
    assert not rep.skipped
    assert not bad, detail


# -- 6 ---------------------------------------------------------------------------

def test_criterion_6_error_magnitudes(capsys):
    rep = study("tri-pk", 1, [8, 16, 32, 64])
    row = next(r for r in rep.rows if r.n == 32)
    ref = {"u": 1.03e-2, "q": 8.46e-3}
    ratio = {key: row.errors[key] / ref[key] for key in ref}
    ok = all(1 / 3 <= r <= 3 for r in ratio.values())
    sens = []
    for tau in (0.5, 2.0, 4.0):
        e = run_convergence_study("tri-pk", 1, [32], tau=tau).rows[0].errors
        sens.append(f"tau={tau:g}: u={e['u']:.3e} q={e['q']:.3e}")
    detail = (f"u={row.errors['u']:.3e} (x{ratio['u']:.2f}), q={row.errors['q']:.3e} "
              f"(x{ratio['q']:.2f}) at tau=1; sensitivity {'; '.join(sens)}")
    if not ok:
        warnings.warn(f"error magnitudes outside a factor 3 of the reference values: {detail}")
    announce(capsys, 6, "PASS" if ok else "WARN", detail)


# -- 7 ---------------------------------------------------------------------------

def _energy(disc, q, u, lam, mu):
    """``mu ||q||^2 + sum tau ||n x (u - u^)||^2`` by direct quadrature."""
    total = mu * float(np.sum(np.abs(q) ** 2))          # orthonormal V bases
    flat = lam.reshape(-1)
    for e in range(disc.mesh.n_elements):
        sp = disc.spaces(e)
        g = disc.groups[disc.element_group[e]]
        loc = flat[disc.edge_dofs[e]] * disc.signs[e]
        for i, edge in enumerate(sp.edges):
            ut = sp.edge_trace_values(sp.W, i) @ u[e]
            uh = sp.edge_modes(i) @ loc[i * disc.nm:(i + 1) * disc.nm]
            total += g.tau_local[i] * float(edge.rule.weights @ np.abs(ut - uh) ** 2)
    return total


@pytest.mark.parametrize("tag", MESH_FAMILIES)
def test_criterion_7_structural_identities(capsys, tag):
    rng = np.random.default_rng(7)
    mesh = MESH_BUILDERS[CONSTRUCTIONS[tag].shape](2)
    k = 1
    tau = rng.uniform(0.3, 3.0, mesh.n_edges)
    disc = Discretization(mesh, tag, k, tau=tau)
    mu = 1.7
    ne = mesh.n_elements
    worst_adj = worst_en = 0.0

    def draw(real):
        parts = [(ne, disc.dim_V), (ne, disc.dim_W), (mesh.n_edges, disc.nm)]
        if real:
            return [rng.standard_normal(s) for s in parts]
        return [random_field_coeffs(rng, int(np.prod(s))).reshape(s) for s in parts]

    for _ in range(20):
        qa, ua, la = draw(False)
        qb, ub, lb = draw(False)
        x = pack(disc, qa, ua, la)
        y = pack(disc, qb, ub, lb)
        jx = pack(disc, qa, -ua, -la)
        jy = pack(disc, qb, -ub, -lb)
        lhs = apply_b(disc, x, jy, mu)
        rhs = np.conj(apply_b(disc, y, jx, mu))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        q, u, lam = draw(True)
        x = pack(disc, q, u, lam)
        b = apply_b(disc, x, x, mu)
        en = _energy(disc, q, u, lam, mu)
        worst_en = max(worst_en, abs(b - en) / en)
    ok = worst_adj <= 1e-12 and worst_en <= 1e-12
    announce(capsys, 7, "PASS" if ok else "FAIL",
             f"[{tag}] adjoint rel {worst_adj:.1e}, energy rel {worst_en:.1e} over 20 draws")
    assert worst_adj <= 1e-12
    assert worst_en <= 1e-12


# -- 8 ---------------------------------------------------------------------------

def strip_mesh(shape, nx, ny):
    """``nx x ny`` cells of the reference element shape (triangles: cut cells)."""
    ref = reference_vertices("parallelogram" if shape == "parallelogram" else "square")
    a, b = ref[1] - ref[0], ref[3] - ref[0]
    verts = np.array([ref[0] + i * a + j * b for j in range(ny + 1) for i in range(nx + 1)])
    cells = []
    for j in range(ny):
        for i in range(nx):
            v0 = j * (nx + 1) + i
            cells.append([v0, v0 + 1, v0 + nx + 2, v0 + nx + 1])
    if shape == "triangle":
        tris = []
        for c in cells:
            tris += [[c[0], c[1], c[2]], [c[0], c[2], c[3]]]
        return mesh_from_elements(verts, tris, "triangle")
    return mesh_from_elements(verts, cells, shape)


def oracle_meshes(shape):
    if shape == "triangle":
        one = mesh_from_elements(reference_vertices("triangle"), [[0, 1, 2]], "triangle")
        return [one, strip_mesh("triangle", 1, 1), strip_mesh("triangle", 2, 2)]
    return [strip_mesh(shape, 1, 1), strip_mesh(shape, 2, 1), strip_mesh(shape, 4, 2)]


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("tag", MESH_FAMILIES)
def test_criterion_8_condensed_equals_monolithic(capsys, tag, k):
    problem = manufactured_solution().problem()
    worst = 0.0
    sizes = []
    for mesh in oracle_meshes(CONSTRUCTIONS[tag].shape):
        disc = Discretization(mesh, tag, k)
        a = solve(assemble_global(disc, problem))
        b = solve_monolithic(disc, problem)
        x = pack(disc, a.q, a.u, a.lam)
        y = pack(disc, b.q, b.u, b.lam)
        worst = max(worst, np.linalg.norm(x - y) / np.linalg.norm(y))
        sizes.append(mesh.n_elements)
    ok = worst <= 1e-10
    announce(capsys, 8, "PASS" if ok else "FAIL",
             f"[{tag} k={k}] meshes with {sizes} elements, max relative difference {worst:.1e}")
    assert worst <= 1e-10


# -- 9 ---------------------------------------------------------------------------

def test_criterion_9_projection_contract(capsys):
    rng = np.random.default_rng(9)
    worst_id = worst_dec = 0.0
    worst_cond = 0.0
    for tag, k in certified_pairs(3):
        mesh = MESH_BUILDERS[CONSTRUCTIONS[tag].shape](2)
        for e in range(mesh.n_elements):
            sp = build_family(tag, k, mesh.element_vertices(e))
            s = np.linalg.svd(projection_matrix(sp, 1.0), compute_uv=False)
            worst_cond = max(worst_cond, s[0] / s[-1])
        sp = build_family(tag, k, reference_vertices(CONSTRUCTIONS[tag].shape))
        cq = random_field_coeffs(rng, sp.V.dim)
        cu = random_field_coeffs(rng, sp.W.dim)
        p = hdg_project(sp, scalar_eval(sp.V, cq), vector_eval(sp.W, cu), tau=rng.uniform(0.5, 2.0))
        worst_id = max(worst_id, np.abs(np.r_[p.q - cq, p.u - cu]).max() / np.abs(np.r_[cq, cu]).max())

    # 20 random smooth fields; the integration by parts behind the decoupled
    # system holds for the quadrature only up to its error, so use a fine rule
    for i in range(20):
        tag, k = certified_pairs(2)[i % len(certified_pairs(2))]
        sp = build_family(tag, k, reference_vertices(CONSTRUCTIONS[tag].shape), quad_degree=24)
        a, b, c = rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0), rng.uniform(-1, 1)
        q = lambda p: np.sin(a * p[:, 0]) * np.cos(b * p[:, 1])
        curl_q = lambda p: np.stack([-b * np.sin(a * p[:, 0]) * np.sin(b * p[:, 1]),
                                     -a * np.cos(a * p[:, 0]) * np.cos(b * p[:, 1])], -1)
        u = lambda p: np.stack([np.exp(c * p[:, 1]) * np.cos(a * p[:, 0]),
                                np.sin(b * p[:, 0] * p[:, 1])], -1)
        tau = rng.uniform(0.5, 2.0)
        full = hdg_project(sp, q, u, tau=tau)
        w = decoupled_project_w(sp, curl_q, u, tau=tau)
        worst_dec = max(worst_dec, np.abs(w - full.u).max() / np.abs(full.u).max())
    ok = worst_id <= 1e-12 and worst_dec <= 1e-10 and np.isfinite(worst_cond)
    announce(capsys, 9, "PASS" if ok else "FAIL",
             f"identity {worst_id:.1e}, decoupled {worst_dec:.1e}, max condition {worst_cond:.1e}")
    assert worst_id <= 1e-12
    assert worst_dec <= 1e-10
    assert np.isfinite(worst_cond)


# -- 10 --------------------------------------------------------------------------

def test_criterion_10_postprocessing_contract(capsys):
    runs = [row.diagnostics for rep in _STUDIES.values() for row in rep.rows]
    if not runs:
        # run on its own: a small set of solves
        for tag in MESH_FAMILIES:
            for k in (1, 2):
                runs += [r.diagnostics for r in run_convergence_study(tag, k, [4, 8]).rows]
    problem = manufactured_solution().problem()
    for tag in MESH_FAMILIES:
        for mesh in oracle_meshes(CONSTRUCTIONS[tag].shape):
            star = postprocess(solve(assemble_global(Discretization(mesh, tag, 1), problem)))
            runs.append({"multiplier_max": star.multiplier_max,
                         "postprocess_residual": max(star.residual_curl, star.residual_grad)})
    mult = max(r["multiplier_max"] for r in runs)
    res = max(r["postprocess_residual"] for r in runs)
    ok = mult <= 1e-10 and res <= 1e-10
    announce(capsys, 10, "PASS" if ok else "FAIL",
             f"{len(runs)} runs, max multiplier {mult:.1e}, max residual {res:.1e}")
    assert mult <= 1e-10
    assert res <= 1e-10
