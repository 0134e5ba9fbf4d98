"""Manufactured solutions, error norms, rates and convergence reports."""

from dataclasses import dataclass, field
import csv
import io
import logging
import math

import numpy as np

from .families import CONSTRUCTIONS, check_family
from .mesh import DOMAIN_MAPS, MESH_BUILDERS, locate
from .postprocess import postprocess
from .quadrature import element_rule
from .solver import (
    ERROR_QUAD_DEGREE, Discretization, GlobalResonanceError, LocalResonanceError, ProblemSpec,
    assemble_global, solve,
)

log = logging.getLogger(__name__)

__all__ = [
    "ExactSolution", "manufactured_solution", "zero_solution", "problem_for",
    "l2_error_vector", "l2_error_scalar", "curl_error_vector", "solution_errors", "eoc",
    "LevelResult", "ConvergenceReport", "run_convergence_study", "render_report", "format_e",
    "CSV_COLUMNS", "ERROR_KEYS", "SAMPLE_COLUMNS", "sample_fields", "render_samples",
]

ERROR_KEYS = ("u", "curl_u", "q", "ustar", "curl_ustar")
CSV_COLUMNS = ["level", "n", "h"] + [c for k in ERROR_KEYS for c in (f"err_{k}", f"rate_{k}")]


@dataclass(frozen=True)
class ExactSolution:
    """Exact fields of ``mu q = curl u``, ``curl q - kappa^2 eps u = f``.

    Every callable takes an ``(npts, 2)`` array of points.  ``curl_q``
    returns the vector curl ``(dq/dy, -dq/dx)``.
    """

    u: object
    q: object
    curl_q: object
    f: object
    mu: float = 1.0
    kappa: float = math.sqrt(10.0)
    eps: complex = 1.0
    name: str = "custom"

    def curl_u(self, p):
        return self.mu * self.q(p)

    def g(self, p, normals):
        """Boundary data ``n x u``."""
        u = self.u(p)
        return normals[:, 0] * u[:, 1] - normals[:, 1] * u[:, 0]

    def problem(self, tau=1.0):
        return ProblemSpec(mu=self.mu, eps=self.eps, kappa=self.kappa, tau=tau, f=self.f, g=self.g)


def manufactured_solution(mu=1.0, kappa=math.sqrt(10.0), eps=1.0):
    """Smooth trigonometric solution used by the convergence studies."""
    pi = np.pi
    sin, cos = np.sin, np.cos
    k2e = kappa ** 2 * complex(eps)

    def u(p):
        x, y = p[:, 0], p[:, 1]
        return np.stack([sin(2 * pi * x) * sin(2 * pi * y), sin(pi * x) * sin(pi * y)], axis=-1)

    def q(p):
        x, y = p[:, 0], p[:, 1]
        return (pi * cos(pi * x) * sin(pi * y) - 2 * pi * sin(2 * pi * x) * cos(2 * pi * y)) / mu

    def curl_q(p):
        x, y = p[:, 0], p[:, 1]
        qy = pi ** 2 * cos(pi * x) * cos(pi * y) + 4 * pi ** 2 * sin(2 * pi * x) * sin(2 * pi * y)
        qx = -pi ** 2 * sin(pi * x) * sin(pi * y) - 4 * pi ** 2 * cos(2 * pi * x) * cos(2 * pi * y)
        return np.stack([qy, -qx], axis=-1) / mu

    def f(p):
        r = curl_q(p) - k2e * u(p)
        return r if k2e.imag else r.real

    return ExactSolution(u, q, curl_q, f, mu, kappa, eps, "manufactured")


def zero_solution(mu=1.0, kappa=math.sqrt(10.0), eps=1.0):
    z2 = lambda p: np.zeros((len(p), 2))
    z1 = lambda p: np.zeros(len(p))
    return ExactSolution(z2, z1, z2, z2, mu, kappa, eps, "zero")


PROBLEMS = {"manufactured": manufactured_solution, "zero": zero_solution}


def problem_for(name):
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    return PROBLEMS[name]()


# -- error norms ---------------------------------------------------------------

def _error(disc, space_of, coeffs, exact, kind):
    """Broken L2 norm of ``exact - discrete`` with a fixed-degree rule."""
    total = 0.0
    for g in disc.groups:
        sp = g.spaces
        rule = g.cache.get("error_rule")
        if rule is None:
            rule = g.cache["error_rule"] = element_rule(sp.vertices, ERROR_QUAD_DEGREE)
        space = space_of(sp)
        c = coeffs[g.elements]
        pts = (rule.points[None] + g.shifts[:, None]).reshape(-1, 2)
        ex = np.asarray(exact(pts))
        if kind == "curl":
            basis = space.curl(rule.points)                 # (nq, d) for vector spaces
            ex = ex.reshape(len(c), -1)
            diff = ex - c @ basis.T
            total += float(np.sum(np.abs(diff) ** 2 @ rule.weights))
        elif space.kind == "scalar":
            basis = space.values(rule.points)
            diff = ex.reshape(len(c), -1) - c @ basis.T
            total += float(np.sum(np.abs(diff) ** 2 @ rule.weights))
        else:
            basis = space.values(rule.points)               # (nq, d, 2)
            dv = ex.reshape(len(c), -1, 2) - np.einsum("qdc,ed->eqc", basis, c)
            total += float(np.sum((np.abs(dv) ** 2).sum(-1) @ rule.weights))
    return math.sqrt(total)


def l2_error_vector(sol, exact_u, star=None):
    """``||u - u_h||`` (or ``||u - u_h*||`` when a post-processed field is given)."""
    if star is None:
        return _error(sol.disc, lambda sp: sp.W, sol.u, exact_u, "value")
    return _error(sol.disc, lambda sp: sp.W_star, star.coeffs, exact_u, "value")


def l2_error_scalar(sol, exact_q):
    """``||q - q_h||``."""
    return _error(sol.disc, lambda sp: sp.V, sol.q, exact_q, "value")


def curl_error_vector(sol, exact_curl_u, star=None):
    """Broken ``||curl(u - u_h)||`` (or with ``u_h*``)."""
    if star is None:
        return _error(sol.disc, lambda sp: sp.W, sol.u, exact_curl_u, "curl")
    return _error(sol.disc, lambda sp: sp.W_star, star.coeffs, exact_curl_u, "curl")


def solution_errors(sol, exact, star=None):
    """All five error norms as a dict keyed by :data:`ERROR_KEYS`."""
    star = star if star is not None else postprocess(sol)
    return {
        "u": l2_error_vector(sol, exact.u),
        "curl_u": curl_error_vector(sol, exact.curl_u),
        "q": l2_error_scalar(sol, exact.q),
        "ustar": l2_error_vector(sol, exact.u, star),
        "curl_ustar": curl_error_vector(sol, exact.curl_u, star),
    }


def eoc(errors, hs):
    """Experimental orders ``log(e_{i-1}/e_i) / log(h_{i-1}/h_i)``.

    Returns one entry fewer than the inputs; a non-positive error gives ``nan``.
    """
    e = np.asarray(errors, float)
    h = np.asarray(hs, float)
    if len(e) != len(h) or len(e) < 2:
        raise ValueError("need matching error and h sequences of length >= 2")
    out = np.full(len(e) - 1, np.nan)
    ok = (e[:-1] > 0) & (e[1:] > 0)
    out[ok] = np.log(e[:-1][ok] / e[1:][ok]) / np.log(h[:-1][ok] / h[1:][ok])
    return out


# -- convergence study -----------------------------------------------------------

@dataclass
class LevelResult:
    n: int
    h: float
    errors: dict
    rates: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def header(self):
        """Table header value ``sqrt(2) / h``."""
        return math.sqrt(2.0) / self.h


@dataclass
class ConvergenceReport:
    tag: str
    k: int
    tau: float
    rows: list
    skipped: list = field(default_factory=list)   # (n, message)

    def rates(self, key):
        return [r.rates.get(key) for r in self.rows[1:]]

    def finest_rates(self):
        if len(self.rows) < 2:
            return {}
        return dict(self.rows[-1].rates)


def _mesh_for(tag, n):
    return MESH_BUILDERS[CONSTRUCTIONS[tag].shape](n)


def run_convergence_study(tag, k, levels, tau=1.0, problem="manufactured"):
    """Solve on each level, post-process and collect the five error norms.

    Levels where the discrete problem is singular are skipped with a
    warning and listed in ``report.skipped``.
    """
    tag = check_family(tag, k)
    levels = [int(n) for n in levels]
    if not levels or any(n < 1 for n in levels) or levels != sorted(set(levels)):
        raise ValueError(f"levels must be distinct, ascending positive integers, got {levels}")
    exact = problem_for(problem) if isinstance(problem, str) else problem
    report = ConvergenceReport(tag, int(k), float(tau), [])
    for n in levels:
        mesh = _mesh_for(tag, n)
        try:
            disc = Discretization(mesh, tag, k, tau=tau)
            sol = solve(assemble_global(disc, exact.problem(tau)))
        except (LocalResonanceError, GlobalResonanceError) as exc:
            log.warning("level n=%d skipped: %s", n, exc)
            report.skipped.append((n, str(exc)))
            continue
        star = postprocess(sol)
        row = LevelResult(n, mesh.h, solution_errors(sol, exact, star))
        row.diagnostics = dict(sol.diagnostics, multiplier_max=star.multiplier_max,
                               postprocess_residual=max(star.residual_curl, star.residual_grad))
        if report.rows:
            prev = report.rows[-1]
            for key in ERROR_KEYS:
                row.rates[key] = float(eoc([prev.errors[key], row.errors[key]], [prev.h, row.h])[0])
        report.rows.append(row)
    return report


# -- rendering -------------------------------------------------------------------

def format_e(x):
    """Compact scientific notation: ``1.03e-2``, ``8.07e+0``."""
    if not np.isfinite(x):
        return str(x)
    mant, exp = f"{x:.2e}".split("e")
    return f"{mant}e{int(exp):+d}"


def _rate(r, digits=None):
    if r is None:
        return ""
    if digits is None:
        return repr(float(r))
    return f"{r:.{digits}f}"


def render_report(report, fmt="csv"):
    """Render a :class:`ConvergenceReport` as CSV or a markdown table."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i, row in enumerate(report.rows):
            cells = [i, row.n, repr(float(row.h))]
            for key in ERROR_KEYS:
                cells += [repr(float(row.errors[key])), _rate(row.rates.get(key))]
            w.writerow(cells)
        return buf.getvalue()
    if fmt == "markdown":
        titles = ["||u-u_h||", "||curl(u-u_h)||", "||q-q_h||", "||u-u_h*||", "||curl(u-u_h*)||"]
        head = ["k", "n", "sqrt(2)/h"] + [t for title in titles for t in (title, "rate")]
        lines = [f"{report.tag}, tau = {report.tau:g}", "",
                 "| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for row in report.rows:
            cells = [str(report.k), str(row.n), f"{row.header:.4g}"]
            for key in ERROR_KEYS:
                cells += [format_e(row.errors[key]), _rate(row.rates.get(key), 2)]
            lines.append("| " + " | ".join(cells) + " |")
        for n, msg in report.skipped:
            lines.append(f"\nskipped n={n}: {msg}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; choose csv or markdown")


# -- sampling -------------------------------------------------------------------

SAMPLE_COLUMNS = ["x", "y", "u1_h", "u2_h", "q_h", "u1_star", "u2_star"]


def sample_fields(sol, star, grid):
    """Real parts of ``(x, y, u_h, q_h, u_h*)`` on a ``grid x grid`` lattice of the domain.

    The lattice is uniform in the reference square and mapped affinely onto
    the mesh's domain; it includes the domain corners when ``grid >= 2``.
    """
    grid = int(grid)
    if grid < 1:
        raise ValueError(f"sample grid must be >= 1, got {grid}")
    r = np.linspace(0.0, 1.0, grid) if grid > 1 else np.array([0.5])
    s, t = np.meshgrid(r, r)
    s, t = s.ravel(), t.ravel()
    disc = sol.disc
    mesh = disc.mesh
    x, y = DOMAIN_MAPS[mesh.shapes[0]](s, t)
    pts = np.column_stack([x, y])
    elem = locate(mesh, s, t)
    out = np.zeros((len(pts), len(SAMPLE_COLUMNS)))
    out[:, 0], out[:, 1] = x, y
    for p, e in enumerate(elem):
        g = disc.groups[disc.element_group[e]]
        local = pts[p:p + 1] - g.shifts[disc.element_slot[e]]
        sp = g.spaces
        out[p, 2:4] = (sp.W.values(local)[0].T @ sol.u[e]).real
        out[p, 4] = (sp.V.values(local)[0] @ sol.q[e]).real
        out[p, 5:7] = (sp.W_star.values(local)[0].T @ star.coeffs[e]).real
    return out


def render_samples(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_COLUMNS)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()
