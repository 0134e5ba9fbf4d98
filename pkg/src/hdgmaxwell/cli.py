"""Command-line front end.

Subcommands::

    converge   convergence study over several mesh levels
    mdecomp    M-decomposition certificate on a reference element
    solve      one solve, printing error norms and solver diagnostics
    sample     one solve, writing field values on a uniform grid as CSV

Exit codes: 0 success, 1 usage or configuration error, 2 resonance (or a
false M-decomposition verdict), 3 indeterminate numerical rank.
"""

import argparse
import logging
import os
import sys
import tempfile

from .analysis import (
    ERROR_KEYS, PROBLEMS, format_e, postprocess, problem_for, render_report, render_samples,
    run_convergence_study, sample_fields, solution_errors,
)
from .families import CONSTRUCTIONS, check_family, default_degree
from .mdecomp import certify
from .mesh import MESH_BUILDERS
from .polyspace import IndeterminateRankError
from .solver import Discretization, GlobalResonanceError, LocalResonanceError, assemble_global, solve

EXIT_OK, EXIT_CONFIG, EXIT_RESONANCE, EXIT_RANK = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _levels(text):
    try:
        levels = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}")
    if not levels or any(n < 1 for n in levels):
        raise argparse.ArgumentTypeError(f"levels must be positive integers, got {text!r}")
    return levels


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser():
    p = _Parser(prog="hdgmaxwell", description="HDG for 2D time-harmonic Maxwell")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    tags = ", ".join(CONSTRUCTIONS)

    def common(sp, levels=True):
        sp.add_argument("--element", required=True, help=f"construction tag ({tags})")
        sp.add_argument("--degree", type=int, help="polynomial degree k")
        sp.add_argument("--out", help="output file (default: standard output)")
        if levels:
            sp.add_argument("--tau", type=_positive_float, default=1.0,
                            help="stabilisation parameter on every edge (default 1.0)")
            sp.add_argument("--problem", choices=sorted(PROBLEMS), default="manufactured",
                            help="data set (default: manufactured)")

    c = sub.add_parser("converge", help="convergence study")
    common(c)
    c.add_argument("--levels", type=_levels, required=True, help="comma-separated n, e.g. 8,16,32")
    c.add_argument("--format", choices=["csv", "markdown"], default="csv")

    m = sub.add_parser("mdecomp", help="M-decomposition certificate")
    common(m, levels=False)

    s = sub.add_parser("solve", help="single solve with error report")
    common(s)
    s.add_argument("--levels", type=_levels, required=True, help="single n")

    g = sub.add_parser("sample", help="single solve, fields on a grid (CSV)")
    common(g)
    g.add_argument("--levels", type=_levels, required=True, help="single n")
    g.add_argument("--grid", type=int, default=11, help="samples per side (default 11)")
    return p


def _degree(args):
    tag = args.element
    k = args.degree
    if k is None:
        try:
            k = default_degree(tag)
        except ValueError as exc:
            raise ConfigError(str(exc))
        if k is None:
            raise ConfigError(f"--degree is required for {tag}")
    try:
        return check_family(tag, k), k
    except ValueError as exc:
        raise ConfigError(str(exc))


def _single_level(args):
    if len(args.levels) != 1:
        raise ConfigError(f"{args.command} takes exactly one level, got {args.levels}")
    return args.levels[0]


def _emit(text, out):
    """Write ``text`` to ``out`` atomically (temporary file, then rename)."""
    if not out:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".hdgmaxwell-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_converge(args):
    tag, k = _degree(args)
    report = run_convergence_study(tag, k, args.levels, tau=args.tau, problem=args.problem)
    for n, msg in report.skipped:
        print(f"warning: level n={n} skipped: {msg}", file=sys.stderr)
    _emit(render_report(report, args.format), args.out)
    return EXIT_RESONANCE if report.skipped else EXIT_OK


def _reference_vertices(tag):
    mesh = MESH_BUILDERS[CONSTRUCTIONS[tag].shape](1)
    return mesh.element_vertices(0)


def cmd_mdecomp(args):
    tag, k = _degree(args)
    report = certify(tag, k, _reference_vertices(tag))
    _emit(f"I_M: {report.im_index}\n" + str(report), args.out)
    return EXIT_OK if report.verdict else EXIT_RESONANCE


def _solve(args):
    tag, k = _degree(args)
    n = _single_level(args)
    exact = problem_for(args.problem)
    mesh = MESH_BUILDERS[CONSTRUCTIONS[tag].shape](n)
    disc = Discretization(mesh, tag, k, tau=args.tau)
    sol = solve(assemble_global(disc, exact.problem(args.tau)))
    return exact, mesh, sol, postprocess(sol)


def cmd_solve(args):
    exact, mesh, sol, star = _solve(args)
    errs = solution_errors(sol, exact, star)
    d = sol.diagnostics
    lines = [
        f"element: {sol.disc.tag}", f"degree: {sol.disc.k}", f"n: {args.levels[0]}",
        f"h: {mesh.h!r}", f"elements: {mesh.n_elements}", f"trace_unknowns: {d['n_unknowns']}",
    ]
    lines += [f"err_{key}: {format_e(errs[key])}" for key in ERROR_KEYS]
    lines += [
        f"solver_residual: {d['residual']:.3e}", f"flux_residual: {d['flux_residual']:.3e}",
        f"multiplier_max: {star.multiplier_max:.3e}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_sample(args):
    if args.grid < 1:
        raise ConfigError(f"--grid must be >= 1, got {args.grid}")
    _, _, sol, star = _solve(args)
    _emit(render_samples(sample_fields(sol, star, args.grid)), args.out)
    return EXIT_OK


COMMANDS = {"converge": cmd_converge, "mdecomp": cmd_mdecomp, "solve": cmd_solve, "sample": cmd_sample}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"hdgmaxwell {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LocalResonanceError, GlobalResonanceError) as exc:
        print(f"hdgmaxwell {args.command}: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except IndeterminateRankError as exc:
        print(f"hdgmaxwell {args.command}: {exc}", file=sys.stderr)
        return EXIT_RANK
    except ValueError as exc:
        print(f"hdgmaxwell {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
