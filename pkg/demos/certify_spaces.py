"""Which local space pairs admit an M-decomposition?

For every construction in the catalogue we build the spaces on the
one-cell mesh of its shape, count the traces of the curl-free fields and
report the M-index together with the full verdict.  Plain P_k on
parallelograms and Q_k on squares come out two trace modes short; the
enriched variants close the gap.
"""

from hdgmaxwell.families import CONSTRUCTIONS
from hdgmaxwell.mdecomp import certify
from hdgmaxwell.mesh import MESH_BUILDERS


def main():
    print(f"{'construction':18s} {'k':>2s} {'dim V':>6s} {'dim W':>6s} {'dim M':>6s} {'I_M':>4s}  verdict")
    for tag, c in CONSTRUCTIONS.items():
        vertices = MESH_BUILDERS[c.shape](1).element_vertices(0)
        for k in range(c.kmin, min(c.kmax, 2) + 1):
            r = certify(tag, k, vertices)
            print(f"{tag:18s} {k:2d} {r.dim_V:6d} {r.dim_W:6d} {r.dim_M:6d} {r.im_index:4d}  "
                  f"{'yes' if r.verdict else 'no'}")


if __name__ == "__main__":
    main()
