"""HDG for 2D time-harmonic Maxwell.

Local spaces and their M-decomposition certificates live in
:mod:`~hdgmaxwell.families` and :mod:`~hdgmaxwell.mdecomp`; the
condensed global solver in :mod:`~hdgmaxwell.solver`; the HDG projection
and the local post-processing in :mod:`~hdgmaxwell.projection` and
:mod:`~hdgmaxwell.postprocess`; error norms and convergence studies in
:mod:`~hdgmaxwell.analysis`.
"""

from .analysis import (
    ConvergenceReport, manufactured_solution, render_report, run_convergence_study,
    solution_errors,
)
from .families import CONSTRUCTIONS, LocalSpaces, build_family
from .mdecomp import MDecompReport, certify, im_index
from .mesh import Mesh, build_parallelogram_mesh, build_square_mesh, build_triangle_mesh
from .polyspace import IndeterminateRankError
from .postprocess import postprocess
from .projection import ProjectionError, decoupled_project_w, hdg_project
from .solver import (
    Discretization, DiscreteSolution, GlobalResonanceError, LocalResonanceError, ProblemSpec,
    assemble_global, solve, solve_problem,
)

__version__ = "0.1.0"
