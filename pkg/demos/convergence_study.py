"""Convergence of the HDG scheme on structured meshes.

Solves the manufactured problem (kappa^2 = 10, mu = eps = 1, tau = 1) on a
sequence of refinements and prints the error table with experimental
orders.  Pass a construction tag and degree on the command line, e.g.::

    python3 demos/convergence_study.py quad-enriched-1 2 8,16,32
"""

import sys

from hdgmaxwell.analysis import render_report, run_convergence_study


def main(tag="tri-pk", k=1, levels=(4, 8, 16, 32)):
    report = run_convergence_study(tag, k, levels)
    print(render_report(report, "markdown"))
    # u_h converges like h^(k+1) and curl u_h like h^k; the post-processed
    # field recovers one more order in the curl
    rates = report.finest_rates()
    print(f"finest rates: curl u_h {rates['curl_u']:.2f}, curl u_h* {rates['curl_ustar']:.2f}")


if __name__ == "__main__":
    args = sys.argv[1:]
    if args:
        main(args[0], int(args[1]), [int(n) for n in args[2].split(",")])
    else:
        main()
