"""Sweep the coupling strength and tabulate explicit feasible (gamma, D) with condition margins."""
import argparse
import csv
import sys

import numpy as np

from nlcont.bounds import CONDITION_NAMES, check_conditions, feasibility
from nlcont.flux import FluxConstants, FluxModel, constants_report
from nlcont.measures import FrequencyMarginal


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--flux", choices=("unit", "winfree", "kuramoto"), default="unit",
                    help="'unit' uses A = B = I = M = 1")
    ap.add_argument("--omega-c", type=float, default=1.0)
    ap.add_argument("--points", type=int, default=20)
    args = ap.parse_args(argv)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kappa", "D", "gamma", "D_tilde", "gamma_tilde"]
               + [f"margin_{n}" for n in CONDITION_NAMES])
    nu = FrequencyMarginal.dirac(args.omega_c)
    for kappa in (np.arange(args.points) + 0.5) / args.points:
        if args.flux == "unit":
            c = FluxConstants(1.0, 1.0, 1.0, 1.0, 1.0)
        else:
            c = constants_report(FluxModel(args.flux, float(kappa)), nu)
            if not c.ok:
                continue
        f = feasibility(float(kappa), c)
        conds = check_conditions(float(kappa), f.gamma_tilde, f.D_tilde, c)
        w.writerow([f"{v:.6g}" for v in (kappa, *f)] + [f"{conds[n].margin:.6g}" for n in CONDITION_NAMES])


if __name__ == "__main__":
    main()
