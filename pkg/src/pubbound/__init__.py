"""Worst-case publication-bias bounds for meta-analyses of effects and of
diagnostic test accuracy."""

__version__ = "0.1.0"

from .bounds import (  # noqa: E402
    PRESETS,
    ScoreMatrix,
    SelectionScenario,
    build_scores,
    copas_jackson_bound,
    draw_z,
    inner_envelope,
)
from .data import (  # noqa: E402
    SchemaError,
    apply_continuity_correction,
    ingest_dta_csv,
    ingest_univariate_csv,
    load_troponin,
    prepare_dta,
    to_bivariate,
)
from .fit import ReitsmaFit, UnivariateFit, fit_reitsma_ml, fit_univariate_ml  # noqa: E402
from .oracle import oracle_bias_simulation, step_rule  # noqa: E402
from .selection import BoundSolution, brute_force_bound, optimize_selection  # noqa: E402
from .sensitivity import (  # noqa: E402
    SensitivityReport,
    replicate_median,
    run_dta_sensitivity,
    run_univariate_sensitivity,
)
from .sroc import SrocParams, sauc, sauc_ci_delta, sop, sroc_point  # noqa: E402
