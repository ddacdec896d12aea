"""Command-line interface: ``pubbound fit`` and ``pubbound bounds``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .bounds import build_scores, draw_z, parse_scenario
from .data import SchemaError, ingest_dta_csv, ingest_univariate_csv, prepare_dta
from .fit import fit_reitsma_ml, fit_univariate_ml, reitsma_fixed, univariate_fixed
from .sensitivity import (
    DEFAULT_P_GRID,
    default_threads,
    parse_p_grid,
    run_dta_sensitivity,
    run_univariate_sensitivity,
)
from .sroc import SrocParams, sauc, sauc_ci_delta, sop, sroc_curve
from .svg import sauc_chart, sroc_band_chart, univariate_chart

EXIT_USAGE = 2
EXIT_FAILURE = 1
EXIT_PARTIAL = 3


@dataclass(frozen=True)
class RunConfig:
    input: str
    kind: str
    out: str
    scenarios: tuple = ("d41", "d42", "d43")
    p_grid: tuple = DEFAULT_P_GRID
    K: int = 2000
    replicates: int = 10
    seed: int = 0
    plots: bool = False
    method: str = "simulation"
    mean_constraint: str = "harmonic"
    variance_at: str = "estimate"
    level: float = 0.95
    omega: tuple | None = None
    tau2: float | None = None
    dump_scores: bool = False

    def __post_init__(self):
        if self.kind not in ("univariate", "dta"):
            raise ValueError("kind must be 'univariate' or 'dta'")
        if self.K < 2 or self.K % 2:
            raise ValueError("K must be an even integer >= 2")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.tau2 is not None and self.tau2 < 0:
            raise ValueError("tau2 must be non-negative")
        if self.omega is not None and len(self.omega) != 3:
            raise ValueError("omega takes three values tau1_sq,tau12,tau2_sq")
        for p in self.p_grid:
            if not 0 < p <= 1:
                raise ValueError(f"p-grid value {p} outside (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = list(self.scenarios)
        d["p_grid"] = list(self.p_grid)
        d["omega"] = None if self.omega is None else list(self.omega)
        return d


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_FAILURE, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra
        self.code = code


def _fail(err: CliError) -> int:
    payload = {"error": err.kind, "message": str(err)}
    payload.update({k: v for k, v in err.extra.items() if v is not None})
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return err.code


def _load_fit(path: str, kind: str):
    try:
        if kind == "dta":
            return fit_reitsma_ml(prepare_dta(ingest_dta_csv(path)))
        return fit_univariate_ml(ingest_univariate_csv(path))
    except FileNotFoundError:
        raise CliError("file_not_found", f"input file {path!r} does not exist", EXIT_USAGE) from None
    except SchemaError as exc:
        raise CliError("schema", str(exc), EXIT_USAGE, row=exc.row, column=exc.column) from None


def _write_json(path: Path, obj) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def cmd_fit(args) -> int:
    out = Path(args.out)
    fit = _load_fit(args.input, args.kind)
    out.mkdir(parents=True, exist_ok=True)
    summary = fit.to_dict()
    summary["input"] = args.input
    if args.kind == "dta":
        if not fit.tau2_sq > 0:
            raise CliError("degenerate_fit", "tau2_sq estimated at zero; SROC curve undefined")
        params = SrocParams.from_fit(fit)
        summary["sauc"] = sauc(params)
        summary["sauc_ci"] = (
            list(sauc_ci_delta(fit, 0.0, args.level)) if fit.cov is not None else None
        )
        sens, spec = sop(fit)
        summary["sop"] = {"sensitivity": sens, "specificity": spec}
        x, y = sroc_curve(params)
        with (out / "sroc_curve.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "sroc"])
            for a, b in zip(x, y):
                w.writerow([repr(round(float(a), 12)), repr(round(float(b), 12))])
    _write_json(out / "fit.json", json.loads(json.dumps(summary, default=float)))
    return 0


def _dump_scores(fit, cfg: RunConfig, out: Path, scenarios) -> None:
    dim = 1 if cfg.kind == "univariate" else 2
    for label, beta in scenarios:
        for r in range(cfg.replicates):
            seed = cfg.seed + r
            sc = build_scores(fit, draw_z(cfg.K, dim, seed), beta=beta)
            ids = sc.study_ids or tuple(str(i + 1) for i in range(sc.n_studies))
            path = out / f"scores_{label}_seed{seed}.csv"
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["study_id", "key", "weight", "draw", "score"])
                for i in range(sc.n_studies):
                    for k in range(sc.K):
                        w.writerow(
                            [ids[i], repr(float(sc.keys[i])), repr(float(sc.weights[i])), k,
                             repr(float(sc.raw[i, k]))]
                        )


def cmd_bounds(args) -> int:
    try:
        scenarios = [parse_scenario(s) for s in args.scenario.split(",") if s.strip()]
        cfg = RunConfig(
            input=args.input,
            kind=args.kind,
            out=args.out,
            scenarios=tuple(label for label, _ in scenarios),
            p_grid=parse_p_grid(args.p_grid),
            K=args.K,
            replicates=args.replicates,
            seed=args.seed,
            plots=args.plots,
            method=args.method,
            mean_constraint=args.mean_constraint,
            variance_at=args.variance_at,
            level=args.level,
            omega=None if args.omega is None else tuple(float(v) for v in args.omega.split(",")),
            tau2=args.tau2,
            dump_scores=args.dump_scores,
        )
        threads = args.threads if args.threads is not None else default_threads()
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_USAGE) from None

    fit = _load_fit(cfg.input, cfg.kind)
    try:
        if cfg.kind == "dta" and cfg.omega is not None:
            fit = reitsma_fixed(fit, *cfg.omega)
        if cfg.kind == "univariate" and cfg.tau2 is not None:
            fit = univariate_fixed(fit, cfg.tau2)
    except ValueError as exc:
        raise CliError("config", str(exc), EXIT_USAGE) from None

    common = dict(
        p_grid=cfg.p_grid,
        K=cfg.K,
        replicates=cfg.replicates,
        base_seed=cfg.seed,
        mean_constraint=cfg.mean_constraint,
        level=cfg.level,
        threads=threads,
    )
    if cfg.kind == "dta":
        try:
            report = run_dta_sensitivity(
                fit, scenarios=scenarios, variance_at=cfg.variance_at, **common
            )
        except ValueError as exc:
            raise CliError("degenerate_fit", str(exc)) from None
    else:
        report = run_univariate_sensitivity(fit, method=cfg.method, **common)
    report.config["run"] = cfg.to_dict()

    out = Path(cfg.out)
    report.write(out)
    if cfg.dump_scores:
        pairs = scenarios if cfg.kind == "dta" else [("univariate", (1.0, 0.0))]
        _dump_scores(fit, cfg, out, pairs)
    if cfg.plots:
        if cfg.kind == "dta":
            sauc_chart(report).save(out / "sauc_vs_p.svg")
            for label, _ in scenarios:
                sroc_band_chart(report, label).save(out / f"sroc_band_{label}.svg")
        else:
            univariate_chart(report).save(out / "bound_vs_p.svg")
    if report.errors:
        first = report.errors[0]
        print(
            json.dumps(
                {
                    "error": "partial_failure",
                    "message": f"{len(report.errors)} cell(s) failed; first: {first.error}",
                    "failed_cells": len(report.errors),
                },
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return EXIT_PARTIAL
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pubbound",
        description="Worst-case publication-bias bounds for univariate and diagnostic meta-analyses.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", required=True, help="CSV: study_id,y,se or study_id,tp,fp,fn,tn")
        p.add_argument("--kind", required=True, choices=("univariate", "dta"))
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--level", type=float, default=0.95, help="confidence level")

    p_fit = sub.add_parser("fit", help="fit the model without bias adjustment")
    common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_b = sub.add_parser("bounds", help="sweep bias bounds over the selection probability")
    common(p_b)
    p_b.add_argument("--scenario", default="d41,d42,d43", help="d41,d42,d43 or beta_<b1>_<b2>")
    p_b.add_argument("--p-grid", default="1.0:0.1:0.1", help="start:stop:step or comma list")
    p_b.add_argument("--K", type=int, default=2000, help="Monte Carlo draws (even)")
    p_b.add_argument("--replicates", type=int, default=10)
    p_b.add_argument("--seed", type=int, default=0)
    p_b.add_argument("--threads", type=int, default=None, help="overrides PUBBOUND_THREADS")
    p_b.add_argument("--plots", action="store_true", help="write SVG figures")
    p_b.add_argument("--dump-scores", action="store_true", help="write score matrices as CSV")
    p_b.add_argument("--method", choices=("simulation", "copas_jackson"), default="simulation",
                     help="univariate only")
    p_b.add_argument("--mean-constraint", choices=("harmonic", "arithmetic"), default="harmonic")
    p_b.add_argument("--variance-at", choices=("estimate", "shifted"), default="estimate",
                     help="where the SAUC gradient for the interval is evaluated")
    p_b.add_argument("--omega", default=None, help="dta: fixed tau1_sq,tau12,tau2_sq")
    p_b.add_argument("--tau2", type=float, default=None, help="univariate: fixed tau^2")
    p_b.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        return _fail(err)
    except Exception as exc:  # noqa: BLE001 - last-resort one-line report
        return _fail(CliError(type(exc).__name__, str(exc)))


if __name__ == "__main__":
    sys.exit(main())
