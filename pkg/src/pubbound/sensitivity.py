"""Sensitivity sweeps over the marginal selection probability.

For every scenario and replicate one set of antithetic draws is scored, and
both directions are solved at every p on that same set, so the bounds of a
replicate are monotone in p by construction. The reported bound is the
replicate median.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .bounds import PRESETS, build_scores, copas_jackson_bound, draw_z
from .fit import ReitsmaFit, UnivariateFit
from .selection import optimize_selection
from .sroc import SrocParams, sauc, sauc_ci_delta, sop, sroc_grid, sroc_point

DEFAULT_P_GRID = tuple(round(1.0 - 0.1 * k, 10) for k in range(10))
DIRECTIONS = ("min", "max")


def replicate_median(values) -> float:
    """Median of replicate values; the mean of the middle two for an even count."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("replicate_median needs at least one value")
    return float(np.median(vals))


def parse_p_grid(spec: str) -> tuple[float, ...]:
    """``start:stop:step`` (inclusive, either direction) or a comma list."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"p-grid {spec!r} must be start:stop:step")
        start, stop, step = (float(x) for x in parts)
        if step <= 0:
            raise ValueError("p-grid step must be positive")
        n = int(math.floor(abs(stop - start) / step + 1e-9))
        sign = 1.0 if stop >= start else -1.0
        grid = [round(start + sign * k * step, 10) for k in range(n + 1)]
    else:
        grid = [float(x) for x in spec.split(",") if x.strip()]
    if not grid:
        raise ValueError("p-grid is empty")
    for p in grid:
        if not 0 < p <= 1:
            raise ValueError(f"p-grid value {p} outside (0, 1]")
    return tuple(grid)


def default_threads() -> int:
    env = os.environ.get("PUBBOUND_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"PUBBOUND_THREADS={env!r} is not an integer") from None
        return max(1, n)
    return 1


def unpublished_count(n_studies: int, p: float) -> float:
    """Descriptive S - N = N(1 - p)/p, reading p as N/S."""
    return n_studies * (1.0 - p) / p


@dataclass
class BoundCell:
    """One (scenario, p, direction) entry of a report."""

    scenario: str
    p: float
    direction: str
    contrast_bound: float | None = None
    replicate_values: list = field(default_factory=list)
    mc_se: float | None = None
    converged: bool = True
    constraint_active: bool | None = None
    p_i: list = field(default_factory=list)
    bias: list = field(default_factory=list)
    estimate: float | None = None
    ci: list = field(default_factory=list)
    error: str | None = None


@dataclass
class SensitivityReport:
    kind: str
    config: dict
    fit: dict
    cells: list
    bands: dict = field(default_factory=dict)
    descriptive: dict = field(default_factory=dict)

    @property
    def errors(self) -> list:
        return [c for c in self.cells if c.error is not None]

    def cell(self, scenario: str, p: float, direction: str) -> BoundCell:
        for c in self.cells:
            if c.scenario == scenario and math.isclose(c.p, p) and c.direction == direction:
                return c
        raise KeyError((scenario, p, direction))

    def to_dict(self) -> dict:
        return _clean(
            {
                "kind": self.kind,
                "config": self.config,
                "fit": self.fit,
                "cells": [asdict(c) for c in self.cells],
                "errors": [
                    {"scenario": c.scenario, "p": c.p, "direction": c.direction, "error": c.error}
                    for c in self.errors
                ],
                "descriptive": self.descriptive,
            }
        )

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "summary.json", out / "bounds.csv"]
        with paths[0].open("w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        if self.kind == "dta":
            header = ["scenario", "p", "direction", "contrast_bound", "sauc", "sauc_lo", "sauc_hi"]
        else:
            header = ["scenario", "p", "direction", "bias_bound", "theta", "theta_lo", "theta_hi"]
        with paths[1].open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for c in self.cells:
                lo, hi = (c.ci + [None, None])[:2]
                w.writerow(
                    [c.scenario, _fmt(c.p), c.direction]
                    + [_fmt(v) for v in (c.contrast_bound, c.estimate, lo, hi)]
                )
        for scenario, rows in sorted(self.bands.items()):
            path = out / f"sroc_band_{scenario}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["p", "x", "sroc_lo", "sroc_hi"])
                for row in rows:
                    w.writerow([_fmt(v) for v in row])
            paths.append(path)
        return paths


def _fmt(value) -> str:
    if isinstance(value, np.floating):
        value = float(value)
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return ""
    if isinstance(value, float):
        return repr(round(value, 12) + 0.0)
    return str(value)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj) + 0.0  # no negative zero
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# replicate solves
# ---------------------------------------------------------------------------


def _solve_replicate(fit, p_grid, K, seed, beta, contrast, mean_constraint):
    """All (p, direction) solutions on one draw set; errors captured per cell."""
    dim = 1 if isinstance(fit, UnivariateFit) else 2
    out = {}
    try:
        scores = build_scores(fit, draw_z(K, dim, seed), contrast=contrast, beta=beta)
    except Exception as exc:  # noqa: BLE001 - reported per cell
        msg = f"{type(exc).__name__}: {exc}"
        return {(p, d): msg for p in p_grid for d in DIRECTIONS}
    for p in p_grid:
        for d in DIRECTIONS:
            try:
                out[(p, d)] = optimize_selection(scores, p, d, mean_constraint=mean_constraint)
            except Exception as exc:  # noqa: BLE001
                out[(p, d)] = f"{type(exc).__name__}: {exc}"
    return out


def _run_grid(fit, tasks, p_grid, K, contrast, mean_constraint, threads):
    """tasks: list of (scenario, beta, seed). Returns {(scenario, seed): results}."""
    def work(task):
        scenario, beta, seed = task
        return (scenario, seed), _solve_replicate(
            fit, p_grid, K, seed, beta, contrast, mean_constraint
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    return dict(results)


def _summarise(scenario, p, direction, sols):
    cell = BoundCell(scenario=scenario, p=float(p), direction=direction)
    errors = [s for s in sols if isinstance(s, str)]
    if errors:
        cell.error = errors[0]
        cell.converged = False
        return cell
    values = [s.value for s in sols]
    cell.replicate_values = values
    cell.contrast_bound = replicate_median(values)
    # representative replicate: the one closest to the median
    rep = sols[int(np.argmin([abs(v - cell.contrast_bound) for v in values]))]
    cell.mc_se = replicate_median([s.mc_se for s in sols])
    cell.converged = all(s.converged for s in sols)
    cell.constraint_active = rep.constraint_active
    cell.p_i = [float(v) for v in rep.p_i]
    cell.bias = [float(v) for v in rep.bias]
    return cell


# ---------------------------------------------------------------------------
# public runners
# ---------------------------------------------------------------------------


def run_univariate_sensitivity(
    fit: UnivariateFit,
    p_grid=DEFAULT_P_GRID,
    K: int = 2000,
    replicates: int = 10,
    base_seed: int = 0,
    method: str = "simulation",
    *,
    level: float = 0.95,
    mean_constraint: str = "harmonic",
    threads: int | None = None,
) -> SensitivityReport:
    """Bounds on theta at each p with the no-bias standard error for the CI."""
    if method not in ("simulation", "copas_jackson"):
        raise ValueError("method must be 'simulation' or 'copas_jackson'")
    p_grid = tuple(float(p) for p in p_grid)
    for p in p_grid:
        if not 0 < p <= 1:
            raise ValueError(f"p-grid value {p} outside (0, 1]")
    threads = default_threads() if threads is None else max(1, int(threads))
    scenario = "univariate" if method == "simulation" else "copas_jackson"
    zq = stats.norm.ppf(0.5 + level / 2.0)

    cells = []
    if method == "simulation":
        seeds = [base_seed + r for r in range(replicates)]
        grid = _run_grid(
            fit, [(scenario, (1.0, 0.0), s) for s in seeds], p_grid, K, None, mean_constraint, threads
        )
        for p in p_grid:
            for d in DIRECTIONS:
                cells.append(_summarise(scenario, p, d, [grid[(scenario, s)][(p, d)] for s in seeds]))
    else:
        for p in p_grid:
            b = copas_jackson_bound(fit.sigmas, p)
            for d in DIRECTIONS:
                cells.append(
                    BoundCell(scenario, p, d, contrast_bound=b if d == "max" else -b, mc_se=0.0)
                )
    for c in cells:
        if c.contrast_bound is not None:
            c.estimate = fit.theta + c.contrast_bound
            c.ci = [float(c.estimate - zq * fit.se_theta), float(c.estimate + zq * fit.se_theta)]
    config = {
        "p_grid": list(p_grid),
        "K": K,
        "replicates": replicates,
        "base_seed": base_seed,
        "method": method,
        "level": level,
        "mean_constraint": mean_constraint,
    }
    return SensitivityReport(
        kind="univariate",
        config=config,
        fit=fit.to_dict(),
        cells=cells,
        descriptive=_descriptive(fit.n_studies, p_grid),
    )


def _descriptive(n, p_grid):
    return {
        "unpublished_studies": {
            repr(p): unpublished_count(n, p) for p in p_grid
        },
        "note": "S - N = N(1 - p)/p with p read as N/S; descriptive only",
    }


def run_dta_sensitivity(
    fit: ReitsmaFit,
    scenarios=("d41", "d42", "d43"),
    p_grid=DEFAULT_P_GRID,
    K: int = 2000,
    replicates: int = 10,
    base_seed: int = 0,
    *,
    contrast=None,
    mean_constraint: str = "harmonic",
    variance_at: str = "estimate",
    level: float = 0.95,
    threads: int | None = None,
    band_points: int = 201,
) -> SensitivityReport:
    """SAUC and SROC-band bounds per (scenario, p).

    ``scenarios`` holds preset names or ``(label, (beta1, beta2))`` pairs.
    The contrast defaults to (1, -tau12/tau2^2), under which c'b is exactly
    the logit-scale shift of the SROC curve.
    """
    if not fit.tau2_sq > 0:
        raise ValueError("tau2_sq must be positive for the SROC-based analysis")
    p_grid = tuple(float(p) for p in p_grid)
    for p in p_grid:
        if not 0 < p <= 1:
            raise ValueError(f"p-grid value {p} outside (0, 1]")
    threads = default_threads() if threads is None else max(1, int(threads))
    named = []
    for sc in scenarios:
        if isinstance(sc, str):
            if sc not in PRESETS:
                raise ValueError(f"unknown scenario {sc!r}")
            named.append((sc, PRESETS[sc]))
        else:
            label, beta = sc
            named.append((label, tuple(float(b) for b in beta)))
    c = np.array([1.0, -fit.tau12 / fit.tau2_sq]) if contrast is None else np.asarray(contrast, float)
    seeds = [base_seed + r for r in range(replicates)]
    tasks = [(label, beta, s) for label, beta in named for s in seeds]
    grid = _run_grid(fit, tasks, p_grid, K, c, mean_constraint, threads)

    x = sroc_grid(band_points)
    cells, bands = [], {}
    base = SrocParams.from_fit(fit)
    for label, _ in named:
        rows = []
        for p in p_grid:
            pair = {}
            for d in DIRECTIONS:
                cell = _summarise(label, p, d, [grid[(label, s)][(p, d)] for s in seeds])
                if cell.contrast_bound is not None:
                    shift = cell.contrast_bound
                    cell.estimate = sauc(SrocParams.from_fit(fit, shift))
                    if fit.cov is not None:
                        try:
                            cell.ci = list(
                                sauc_ci_delta(fit, shift, level, variance_at=variance_at)
                            )
                        except ValueError as exc:
                            cell.error = f"ValueError: {exc}"
                pair[d] = cell
                cells.append(cell)
            if all(pair[d].contrast_bound is not None for d in DIRECTIONS):
                lo = sroc_point(x, SrocParams.from_fit(fit, pair["min"].contrast_bound))
                hi = sroc_point(x, SrocParams.from_fit(fit, pair["max"].contrast_bound))
                rows.extend((p, float(xx), float(a), float(b)) for xx, a, b in zip(x, lo, hi))
        bands[label] = rows

    fit_summary = fit.to_dict()
    fit_summary["sauc"] = sauc(base)
    fit_summary["sop"] = dict(zip(("sensitivity", "specificity"), sop(fit)))
    if fit.cov is not None:
        fit_summary["sauc_ci"] = list(sauc_ci_delta(fit, 0.0, level))
    config = {
        "scenarios": {label: list(beta) for label, beta in named},
        "p_grid": list(p_grid),
        "K": K,
        "replicates": replicates,
        "base_seed": base_seed,
        "contrast": c.tolist(),
        "mean_constraint": mean_constraint,
        "variance_at": variance_at,
        "level": level,
    }
    return SensitivityReport(
        kind="dta",
        config=config,
        fit=fit_summary,
        cells=cells,
        bands=bands,
        descriptive=_descriptive(fit.n_studies, p_grid),
    )
