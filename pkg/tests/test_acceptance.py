"""Acceptance criteria A1-A7. Each test records one PASS/FAIL line, printed in
the terminal summary."""

import csv
import json
import time

import numpy as np
import pytest
from scipy import special

from conftest import record_acceptance
from pubbound.bounds import bivariate_scores, copas_jackson_bound, draw_z, univariate_scores
from pubbound.cli import main
from pubbound.data import UnivariateObservation, load_troponin, prepare_dta, troponin_path
from pubbound.fit import fit_reitsma_ml, fit_univariate_ml
from pubbound.oracle import oracle_bias_simulation, step_rule
from pubbound.selection import brute_force_bound, optimize_selection
from pubbound.sensitivity import replicate_median, run_univariate_sensitivity
from pubbound.sroc import SrocParams, sauc, sauc_ci_delta

# lower SAUC bounds printed for the troponin example
TABLE3 = {
    1.0: (0.723, 0.638, 0.794),
    0.9: (0.697, 0.614, 0.769),
    0.8: (0.675, 0.593, 0.748),
    0.7: (0.653, 0.572, 0.727),
    0.6: (0.631, 0.550, 0.705),
    0.5: (0.608, 0.528, 0.683),
    0.4: (0.582, 0.503, 0.658),
    0.3: (0.552, 0.474, 0.628),
    0.2: (0.514, 0.436, 0.591),
    0.1: (0.455, 0.378, 0.533),
}
P_GRID = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]


@pytest.fixture(scope="module")
def table3_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("table3")
    start = time.perf_counter()
    code = main(
        ["bounds", "--input", str(troponin_path()), "--kind", "dta", "--scenario", "d41,d42,d43",
         "--p-grid", "1.0:0.1:0.1", "--K", "2000", "--replicates", "10", "--seed", "20230401",
         "--threads", "1", "--out", str(out)]
    )
    elapsed = time.perf_counter() - start
    with open(out / "bounds.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    summary = json.loads((out / "summary.json").read_text())
    return code, elapsed, rows, summary, out


def test_a1_troponin_fit():
    start = time.perf_counter()
    fit = fit_reitsma_ml(prepare_dta(load_troponin()))
    value = sauc(SrocParams.from_fit(fit))
    lo, hi = sauc_ci_delta(fit)
    elapsed = time.perf_counter() - start
    checks = [
        abs(value - 0.724) <= 0.01,
        abs(lo - 0.639) <= 0.015,
        abs(hi - 0.795) <= 0.015,
        abs(fit.tau1_sq - 0.171) <= 0.02,
        abs(fit.tau12 + 0.283) <= 0.02,
        abs(fit.tau2_sq - 0.588) <= 0.02,
        elapsed < 5.0,
    ]
    record_acceptance(
        "A1",
        all(checks),
        f"SAUC {value:.4f} CI [{lo:.4f}, {hi:.4f}] tau=({fit.tau1_sq:.4f}, {fit.tau12:.4f}, "
        f"{fit.tau2_sq:.4f}) in {elapsed:.2f}s",
    )
    assert all(checks)


def test_a2_table3(table3_run):
    code, elapsed, rows, _, _ = table3_run
    lower = {}
    for r in rows:
        if r["direction"] == "min":
            lower.setdefault(float(r["p"]), {})[r["scenario"]] = (
                float(r["sauc"]), float(r["sauc_lo"]), float(r["sauc_hi"])
            )
    worst = 0.0
    ok = code == 0 and elapsed < 600
    for p, (target, _, _) in TABLE3.items():
        best = min(abs(v[0] - target) for v in lower[p].values())
        worst = max(worst, best)
        tol = 0.005 if p == 1.0 else 0.015
        ok &= best <= tol
    ci_err = max(
        max(abs(v[1] - TABLE3[p][1]), abs(v[2] - TABLE3[p][2]))
        for p in TABLE3 for v in lower[p].values()
    )
    record_acceptance(
        "A2",
        ok,
        f"max |lower SAUC - printed| = {worst:.4f} (CI endpoints within {ci_err:.4f}); "
        f"p=1 SAUC {lower[1.0]['d43'][0]:.4f}; runtime {elapsed:.1f}s",
    )
    assert ok


def test_a3_closed_form_oracle():
    sig = np.full(14, 0.55)
    worst = 0.0
    ok = True
    for p in P_GRID[1:]:
        vals = [optimize_selection(univariate_scores(sig, draw_z(2000, 1, s)), p).value for s in range(10)]
        rel = abs(np.mean(vals) / copas_jackson_bound(sig, p) - 1)
        worst = max(worst, rel)
        ok &= rel <= 0.02
    excess = -np.inf
    rng = np.random.default_rng(2024)
    for _ in range(5):
        sig = rng.uniform(0.1, 1.5, 14)
        for s in range(10):
            sc = univariate_scores(sig, draw_z(2000, 1, 100 + s))
            for p in P_GRID[1:]:
                sol = optimize_selection(sc, p)
                margin = (sol.value - copas_jackson_bound(sig, p)) / sol.mc_se
                excess = max(excess, margin)
                ok &= sol.value <= copas_jackson_bound(sig, p) + 3 * sol.mc_se
    record_acceptance(
        "A3",
        ok,
        f"equal-sigma max relative error {worst:.4f}; unequal-sigma largest excess over b_CJ "
        f"{excess:.2f} MC SEs",
    )
    assert ok


def test_a4_brute_force_equivalence():
    rng = np.random.default_rng(404)
    start = time.perf_counter()
    worst = 0.0
    for n in range(50):
        N = int(rng.integers(1, 4))
        K = int(rng.choice([2, 4, 6, 8, 10, 12]))
        p = float(rng.choice([1.0, 0.9, 0.7, 0.5, 0.3, 0.1]))
        direction = "max" if n % 4 < 2 else "min"
        if n % 2:
            a = rng.normal(size=(N, 2, 2))
            sig = a @ np.transpose(a, (0, 2, 1)) + 0.1 * np.eye(2)
            sc = bivariate_scores(sig, rng.normal(size=2), draw_z(K, 2, n), beta=(1.0, 1.0))
        else:
            sc = univariate_scores(rng.uniform(0.2, 2.0, N), draw_z(K, 1, n))
        diff = abs(optimize_selection(sc, p, direction).value - brute_force_bound(sc, p, direction))
        worst = max(worst, diff)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-3 and elapsed < 60
    record_acceptance("A4", ok, f"50 instances, max |solver - brute force| = {worst:.2e} in {elapsed:.1f}s")
    assert ok


def test_a5_trivial_pins(troponin_fit, table3_run):
    results = {}
    for name, sc in (
        ("univariate", univariate_scores(np.linspace(0.2, 1.0, 9), draw_z(2000, 1, 1))),
        ("bivariate", bivariate_scores(troponin_fit.marginal_covariances(), [1.0, 0.48], draw_z(2000, 2, 1))),
    ):
        full = optimize_selection(sc, 1.0)
        results[f"{name} p=1 pinned"] = bool(np.all(full.p_i == 1.0) and abs(full.value) <= 3 * full.mc_se)
        sym = all(
            abs(optimize_selection(sc, p, "max").value + optimize_selection(sc, p, "min").value) <= 1e-9
            for p in (0.9, 0.5, 0.1)
        )
        results[f"{name} max=-min"] = sym
    flat = SrocParams(1.3, -0.4, 0.2, 0.0, 0.5)
    results["flat SAUC"] = abs(sauc(flat) - special.expit(1.3)) <= 1e-10
    _, _, rows, summary, _ = table3_run
    base_ci = list(sauc_ci_delta(troponin_fit))
    p1 = [r for r in rows if float(r["p"]) == 1.0]
    results["delta CI at zero shift"] = all(
        [float(r["sauc_lo"]), float(r["sauc_hi"])] == [float(repr(round(v, 12))) for v in base_ci] for r in p1
    ) and sauc_ci_delta(troponin_fit, 0.0, variance_at="shifted") == tuple(base_ci)
    ok = all(results.values())
    record_acceptance("A5", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in results.items()))
    assert ok


def test_a6_bias_equation_oracle():
    rng = np.random.default_rng(6)
    obs = [UnivariateObservation(str(i), float(rng.normal(0.1, 0.6)), 0.35) for i in range(14)]
    fit = fit_univariate_ml(obs)
    sols = [optimize_selection(univariate_scores(fit.sigmas, draw_z(2000, 1, s)), 0.5) for s in range(10)]
    bound = replicate_median([s.value for s in sols])
    bound_se = replicate_median([s.mc_se for s in sols]) / np.sqrt(len(sols))
    levels = step_rule(fit.sigmas, 0.5)
    res = oracle_bias_simulation(fit, levels, population_size=200_000, seed=6)
    se = float(np.hypot(res.se, bound_se))
    cj = copas_jackson_bound(fit.sigmas, 0.5)
    ok = abs(res.contrast_bias - bound) <= 3 * se and abs(res.contrast_bias - cj) <= 3 * res.se
    record_acceptance(
        "A6",
        ok,
        f"empirical bias {res.contrast_bias:.4f} (SE {res.se:.4f}) vs bound {bound:.4f} "
        f"(SE {bound_se:.4f}) and closed form {cj:.4f}; {res.n_selected} of {res.population_size} selected",
    )
    assert ok


def test_a7_monotonicity(table3_run):
    _, _, rows, summary, out = table3_run
    ok = True
    for sc in ("d41", "d42", "d43"):
        lows = sorted(
            (float(r["p"]), float(r["sauc"])) for r in rows if r["scenario"] == sc and r["direction"] == "min"
        )
        ok &= all(b[1] >= a[1] for a, b in zip(lows, lows[1:]))
        with open(out / f"sroc_band_{sc}.csv", newline="") as fh:
            band = np.array([[float(v) for v in r.values()] for r in csv.DictReader(fh)])
        ps = sorted(set(band[:, 0]))
        for small, large in zip(ps, ps[1:]):
            wide, narrow = band[band[:, 0] == small], band[band[:, 0] == large]
            ok &= bool(np.all(wide[:, 2] <= narrow[:, 2]) and np.all(narrow[:, 3] <= wide[:, 3]))
    obs = [UnivariateObservation(str(i), float(v), float(s))
           for i, (v, s) in enumerate(zip(np.linspace(-0.5, 0.8, 12), np.linspace(0.15, 0.9, 12)))]
    uni = run_univariate_sensitivity(fit_univariate_ml(obs), P_GRID, K=2000, replicates=10)
    ups = [uni.cell("univariate", p, "max").contrast_bound for p in sorted(P_GRID)]
    ok &= all(b <= a for a, b in zip(ups, ups[1:]))
    record_acceptance("A7", ok, "lower SAUC non-decreasing, univariate max non-increasing, SROC bands nested")
    assert ok
