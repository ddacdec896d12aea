"""Lower SAUC bounds for the troponin example over the p grid, beside the printed values."""

import argparse

from pubbound.data import load_troponin, prepare_dta
from pubbound.fit import fit_reitsma_ml
from pubbound.sensitivity import DEFAULT_P_GRID, run_dta_sensitivity

PRINTED = {
    1.0: (0.723, 0.638, 0.794), 0.9: (0.697, 0.614, 0.769), 0.8: (0.675, 0.593, 0.748),
    0.7: (0.653, 0.572, 0.727), 0.6: (0.631, 0.550, 0.705), 0.5: (0.608, 0.528, 0.683),
    0.4: (0.582, 0.503, 0.658), 0.3: (0.552, 0.474, 0.628), 0.2: (0.514, 0.436, 0.591),
    0.1: (0.455, 0.378, 0.533),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=2000)
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--seed", type=int, default=20230401)
    args = ap.parse_args()

    fit = fit_reitsma_ml(prepare_dta(load_troponin()))
    report = run_dta_sensitivity(
        fit, ("d41", "d42", "d43"), DEFAULT_P_GRID, args.K, args.replicates, args.seed
    )
    print(f"{'p':>4}  {'printed':>22}  " + "  ".join(f"{s:>22}" for s in ("d41", "d42", "d43")))
    for p in DEFAULT_P_GRID:
        ref = PRINTED[p]
        cols = []
        for sc in ("d41", "d42", "d43"):
            c = report.cell(sc, p, "min")
            cols.append(f"{c.estimate:.3f} [{c.ci[0]:.3f}, {c.ci[1]:.3f}]")
        print(f"{p:4.1f}  {ref[0]:.3f} [{ref[1]:.3f}, {ref[2]:.3f}]  " + "  ".join(f"{x:>22}" for x in cols))


if __name__ == "__main__":
    main()
