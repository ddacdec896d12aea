"""Simulated univariate bound against the closed form, equal and unequal sigma."""

import argparse

import numpy as np

from pubbound.bounds import copas_jackson_bound, draw_z, univariate_scores
from pubbound.selection import optimize_selection

P_GRID = (0.9, 0.7, 0.5, 0.3, 0.1)


def sweep(sig, K, seeds):
    rows = []
    for p in P_GRID:
        sols = [optimize_selection(univariate_scores(sig, draw_z(K, 1, s)), p) for s in range(seeds)]
        vals = np.array([s.value for s in sols])
        rows.append((p, vals.mean(), vals.max(), np.median([s.mc_se for s in sols]), copas_jackson_bound(sig, p)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=14)
    ap.add_argument("--K", type=int, default=2000)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    rng = np.random.default_rng(1)
    for label, sig in (("equal sigma", np.full(args.N, 0.55)), ("unequal sigma", rng.uniform(0.1, 1.5, args.N))):
        print(label)
        print(f"{'p':>4} {'sim mean':>9} {'sim max':>9} {'MC SE':>8} {'closed':>9} {'rel':>8}")
        for p, mean, top, se, cj in sweep(sig, args.K, args.seeds):
            print(f"{p:4.1f} {mean:9.4f} {top:9.4f} {se:8.4f} {cj:9.4f} {mean / cj - 1:8.4f}")


if __name__ == "__main__":
    main()
