"""Troponin lower SAUC under the harmonic and arithmetic mean constraints."""

import argparse

from pubbound.data import load_troponin, prepare_dta
from pubbound.fit import fit_reitsma_ml
from pubbound.sensitivity import run_dta_sensitivity

P_GRID = (1.0, 0.8, 0.6, 0.5, 0.4, 0.2, 0.1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=2000)
    ap.add_argument("--replicates", type=int, default=3)
    ap.add_argument("--scenario", default="d43")
    args = ap.parse_args()

    fit = fit_reitsma_ml(prepare_dta(load_troponin()))
    reports = {
        mc: run_dta_sensitivity(fit, (args.scenario,), P_GRID, args.K, args.replicates, 0, mean_constraint=mc)
        for mc in ("harmonic", "arithmetic")
    }
    print(f"{'p':>4} {'harmonic':>9} {'arithmetic':>11}")
    for p in P_GRID:
        h = reports["harmonic"].cell(args.scenario, p, "min").estimate
        a = reports["arithmetic"].cell(args.scenario, p, "min").estimate
        print(f"{p:4.1f} {h:9.4f} {a:11.4f}")


if __name__ == "__main__":
    main()
