"""Empirical Lipschitz quotients of the return time and return map against their bounds."""
import argparse
import json

import numpy as np

from nlcont.dynamics import IntegratorOptions
from nlcont.flux import FluxModel, constants_report
from nlcont.measures import FrequencyMarginal
from nlcont.poincare import initial_guess, map_lipschitz_probe, return_time_lipschitz_probe


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappa", type=float, default=0.1)
    ap.add_argument("--pairs", type=int, default=6)
    ap.add_argument("--width", type=float, default=0.04)
    ap.add_argument("--D", type=float, default=0.06)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    nu = FrequencyMarginal.equal_weights(np.linspace(0.995, 1.005, 8))
    model = FluxModel.winfree(args.kappa)
    c = constants_report(model, nu)
    base = initial_guess(nu, "band", 8, width=args.width)
    pairs = []
    for _ in range(args.pairs):
        e = rng.uniform(1e-4, 5e-3)
        pairs.append((base, initial_guess(nu, "band", 8, width=args.width + e,
                                          slope=rng.uniform(-1, 1) * e)))
    opts = IntegratorOptions(dt=0.01)
    out = {
        "seed": args.seed,
        "return_time": return_time_lipschitz_probe(model, pairs, opts, c, nu.gamma, args.D),
        "return_map": map_lipschitz_probe(model, pairs, opts, c, nu.gamma, args.D),
    }
    print(json.dumps(out, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
