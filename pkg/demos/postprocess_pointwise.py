"""Element-wise look at the post-processed field.

After one solve we post-process every element and compare the curl of
u_h and of u_h* with the exact curl at the element centroids.  The
Lagrange multipliers of the local problems should vanish to rounding,
which is a cheap consistency check on the whole pipeline.
"""

import numpy as np

from hdgmaxwell.analysis import manufactured_solution
from hdgmaxwell.mesh import build_triangle_mesh
from hdgmaxwell.postprocess import curl_of_postprocessed, postprocess
from hdgmaxwell.solver import solve_problem


def main(n=16, k=1):
    exact = manufactured_solution()
    mesh = build_triangle_mesh(n)
    sol = solve_problem(mesh, "tri-pk", k, exact.problem())
    star = postprocess(sol)
    disc = sol.disc

    cents = mesh.centroids()
    err_h, err_star = [], []
    for e in range(mesh.n_elements):
        g = disc.groups[disc.element_group[e]]
        local = cents[e:e + 1] - g.shifts[disc.element_slot[e]]
        curl_h = g.spaces.W.curl(local) @ sol.u[e]
        curl_star = curl_of_postprocessed(disc, star, e, cents[e:e + 1])
        ref = exact.curl_u(cents[e:e + 1])
        err_h.append(abs(curl_h - ref)[0])
        err_star.append(abs(curl_star - ref)[0])

    print(f"n = {n}, k = {k}, {mesh.n_elements} elements")
    print(f"max centroid error of curl u_h : {max(err_h):.3e}")
    print(f"max centroid error of curl u_h*: {max(err_star):.3e}")
    print(f"largest local multiplier       : {star.multiplier_max:.1e}")
    print(f"solver residual                : {sol.diagnostics['residual']:.1e}")


if __name__ == "__main__":
    np.set_printoptions(precision=3)
    main()
