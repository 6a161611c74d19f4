"""Record the fixed-point residual history for several couplings and relaxations.

The per-iteration residual ratio estimates the contraction factor of the
return map, which the theory does not provide.
"""
import argparse
import csv
import sys

import numpy as np

from nlcont.dynamics import IntegratorOptions
from nlcont.flux import FluxModel, sync_integral
from nlcont.measures import FrequencyMarginal
from nlcont.poincare import find_periodic, initial_guess


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappas", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    ap.add_argument("--relax", nargs="+", default=["1", "0.5"])
    ap.add_argument("--nodes", type=int, default=16)
    ap.add_argument("--quantiles", type=int, default=32)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args(argv)

    nu = FrequencyMarginal.equal_weights(np.linspace(0.995, 1.005, args.nodes))
    K0 = initial_guess(nu, "band", args.quantiles, slope=1.0, width=0.3)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kappa", "relax", "iterations", "residual", "period", "median_ratio",
                "exp_sync_integral"])
    for kappa in args.kappas:
        m = FluxModel.winfree(kappa)
        for relax in args.relax:
            res = find_periodic(K0, m, IntegratorOptions(dt=args.dt), tol=args.tol,
                                max_iter=400, relax=float(relax))
            r = np.array([h[1] for h in res.history])
            ratio = float(np.median(r[1:] / r[:-1])) if r.size > 1 else float("nan")
            w.writerow([kappa, relax, res.iterations, f"{res.residual:.3e}",
                        f"{res.period:.10f}", f"{ratio:.4f}",
                        f"{np.exp(sync_integral(m, nu)):.4f}"])


if __name__ == "__main__":
    main()
