"""Population simulation of the bias induced by a given selection rule.

A large population of studies is drawn from the fitted model, studies are
published according to an extremal rule (each study is selected when its
score exceeds the quantile matching its study-level probability), and the
overall mean is re-estimated on the published studies with heterogeneity
held fixed. The resulting empirical bias is an independent check of the
bias program, which only ever sees Monte Carlo draws and the envelope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bounds import default_contrast, inverse_sqrt

MIN_POPULATION = 100_000


@dataclass(frozen=True)
class OracleResult:
    bias: np.ndarray
    contrast_bias: float
    se: float
    n_selected: int
    population_size: int

    def to_dict(self) -> dict:
        return {
            "bias": [float(b) for b in self.bias],
            "contrast_bias": self.contrast_bias,
            "se": self.se,
            "n_selected": self.n_selected,
            "population_size": self.population_size,
        }


def step_rule(keys, p: float, n_low: int | None = None) -> np.ndarray:
    """Two-level study probabilities: the ``n_low`` largest keys get gamma, the rest 1.

    gamma makes the harmonic mean of the levels equal ``p``. With ``n_low``
    omitted every study gets ``p``.
    """
    keys = np.asarray(keys, dtype=float)
    N = keys.size
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    n_low = N if n_low is None else int(n_low)
    if not 1 <= n_low <= N:
        raise ValueError("n_low must lie in 1..N")
    gamma = n_low / (N / p - (N - n_low))
    levels = np.ones(N)
    levels[np.argsort(-keys, kind="stable")[:n_low]] = gamma
    return levels


def _model_pieces(fit, contrast):
    from .fit import ReitsmaFit, UnivariateFit

    if isinstance(fit, UnivariateFit):
        sig = fit.sigmas
        cov = sig.reshape(-1, 1, 1) ** 2
        theta = np.array([fit.theta])
        c = np.ones(1)
    elif isinstance(fit, ReitsmaFit):
        cov = fit.marginal_covariances()
        theta = fit.theta
        c = default_contrast(fit) if contrast is None else np.asarray(contrast, dtype=float)
    else:
        raise TypeError(f"unsupported fit type {type(fit).__name__}")
    prec = np.linalg.inv(cov)
    A = np.linalg.inv(prec.sum(axis=0))
    roots = np.array([inverse_sqrt(S) for S in cov])
    # selection direction in standardised coordinates z = Sigma^{-1/2} e
    directions = np.einsum("j,jk,ikl->il", c, A, roots)
    return theta, cov, prec, directions, c


def oracle_bias_simulation(
    fit,
    levels,
    *,
    population_size: int = 200_000,
    direction: str = "max",
    contrast=None,
    seed: int = 0,
) -> OracleResult:
    """Empirical bias (refit minus truth) under the extremal rule at ``levels``.

    ``levels`` holds one study-level selection probability per fitted study.
    Population designs are drawn with probability proportional to 1/level,
    so the published studies reproduce the observed designs in expectation.
    """
    if population_size < MIN_POPULATION:
        raise ValueError(f"population_size must be at least {MIN_POPULATION}")
    if direction not in ("max", "min"):
        raise ValueError("direction must be 'max' or 'min'")
    theta, cov, prec, dirs, c = _model_pieces(fit, contrast)
    q = np.asarray(levels, dtype=float)
    if q.shape != (cov.shape[0],) or np.any((q <= 0) | (q > 1)):
        raise ValueError("levels must hold one probability in (0, 1] per study")
    if direction == "min":
        dirs = -dirs

    rng = np.random.default_rng(seed)
    design = rng.choice(q.size, size=population_size, p=(1 / q) / np.sum(1 / q))
    dim = theta.size
    z = rng.standard_normal((population_size, dim))
    chol = np.linalg.cholesky(cov)
    err = np.einsum("nij,nj->ni", chol[design], z)
    # standardise with the symmetric root so the rule matches the bias program
    sym = np.array([inverse_sqrt(S) for S in cov])
    zsym = np.einsum("nij,nj->ni", sym[design], err)
    norms = np.linalg.norm(dirs, axis=1)
    score = np.einsum("ni,ni->n", dirs[design], zsym)
    with np.errstate(divide="ignore"):
        cut = norms * stats.norm.ppf(1.0 - q)
    selected = (score >= cut[design]) | (q[design] >= 1.0)
    n_sel = int(selected.sum())
    if n_sel == 0:
        raise ValueError("no study selected; population too small for these levels")

    W = prec[design]
    num = np.einsum("nij,nj->ni", W, err) * selected[:, None]  # U_j
    den = W * selected[:, None, None]  # V_j
    V = den.mean(axis=0)
    U = num.mean(axis=0)
    Vinv = np.linalg.inv(V)
    bias = Vinv @ U
    # linearised ratio estimator: psi_j = V^{-1}(U_j - V_j b)
    psi = (num - np.einsum("nij,j->ni", den, bias)) @ Vinv.T
    cpsi = psi @ c
    se = float(np.std(cpsi, ddof=1) / np.sqrt(population_size))
    return OracleResult(
        bias=bias,
        contrast_bias=float(c @ bias),
        se=se,
        n_selected=n_sel,
        population_size=population_size,
    )
