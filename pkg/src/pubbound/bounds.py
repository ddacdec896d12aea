"""Ingredients of the worst-case bias bounds.

The Monte Carlo bias contrast for a selection pattern is

    (1/K) sum_i sum_k a_i * s_ik * p_ik / p_i

where s_ik are per-study scores of antithetic normal draws, p_ik the
within-study selection probabilities and p_i their study-level means. This
module builds the scores and solves the inner problem over p_ik exactly; the
outer problem over p_i lives in :mod:`pubbound.selection`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats

PRESETS = {"d41": (1.0, 0.0), "d42": (0.0, 1.0), "d43": (1.0, 1.0)}


@dataclass(frozen=True)
class SelectionScenario:
    """Monotonicity key weights plus the Monte Carlo settings for one analysis."""

    beta1: float = 1.0
    beta2: float = 1.0
    p: float = 1.0
    K: int = 2000
    replicates: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0 or self.beta1 > 1 or self.beta2 > 1:
            raise ValueError("beta weights must lie in [0, 1]")
        if self.beta1 == 0 and self.beta2 == 0:
            raise ValueError("beta weights cannot both be zero")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.K < 2 or self.K % 2:
            raise ValueError("K must be an even integer >= 2 (antithetic pairs)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def beta(self) -> tuple[float, float]:
        return (self.beta1, self.beta2)

    @property
    def label(self) -> str:
        return scenario_label(self.beta)

    def seeds(self) -> list[int]:
        return [self.base_seed + r for r in range(self.replicates)]


def scenario_label(beta) -> str:
    for name, preset in PRESETS.items():
        if tuple(float(b) for b in beta) == preset:
            return name
    return f"beta_{beta[0]:g}_{beta[1]:g}"


def parse_scenario(text: str) -> tuple[str, tuple[float, float]]:
    """``d41``/``d42``/``d43`` or ``beta_<b1>_<b2>`` -> (label, weights)."""
    text = text.strip()
    if text in PRESETS:
        return text, PRESETS[text]
    parts = text.split("_")
    if len(parts) == 3 and parts[0] == "beta":
        try:
            beta = (float(parts[1]), float(parts[2]))
        except ValueError:
            pass
        else:
            SelectionScenario(beta1=beta[0], beta2=beta[1])  # validates weights
            return f"beta_{beta[0]:g}_{beta[1]:g}", beta
    raise ValueError(f"unknown scenario {text!r}; use d41, d42, d43 or beta_<b1>_<b2>")


def draw_z(K: int, dim: int = 1, seed: int = 0) -> np.ndarray:
    """K antithetic standard-normal draws, shape (K, dim).

    Rows come in pairs (z, -z), so every column has sample mean exactly 0.
    """
    if K < 2 or K % 2:
        raise ValueError("K must be even and at least 2")
    half = np.random.default_rng(seed).standard_normal((K // 2, dim))
    z = np.empty((K, dim))
    z[0::2] = half
    z[1::2] = -half
    return z


def copas_jackson_bound(sigmas, p: float) -> float:
    """Closed-form bound (sum 1/sigma / sum 1/sigma^2) * phi(Phi^-1(p)) / p."""
    sig = np.asarray(sigmas, dtype=float)
    if sig.size == 0 or np.any(sig <= 0):
        raise ValueError("sigmas must be non-empty and positive")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if p == 1:
        return 0.0
    ratio = np.sum(1.0 / sig) / np.sum(sig**-2)
    return float(ratio * stats.norm.pdf(stats.norm.ppf(p)) / p)


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-study scores of one set of draws.

    raw[i, k] is study i's score for draw k (draw order kept so per-draw
    contributions line up across studies). ``weights`` are the a_i, ``keys``
    the monotonicity key (larger key => selection probability no larger).
    ``loadings[i] @ z[k]`` is the draw's contribution to the bias vector,
    so that raw[i, k] * weights[i] == contrast @ loadings[i] @ z[k].
    """

    raw: np.ndarray
    weights: np.ndarray
    keys: np.ndarray
    loadings: np.ndarray
    z: np.ndarray
    contrast: np.ndarray
    study_ids: tuple = field(default=())

    @property
    def n_studies(self) -> int:
        return self.raw.shape[0]

    @property
    def K(self) -> int:
        return self.raw.shape[1]

    @cached_property
    def sorted_desc(self) -> np.ndarray:
        return -np.sort(-self.raw, axis=1)

    def negated(self) -> "ScoreMatrix":
        """Scores for the minimisation problem."""
        return ScoreMatrix(
            raw=-self.raw,
            weights=self.weights,
            keys=self.keys,
            loadings=-self.loadings,
            z=self.z,
            contrast=self.contrast,
            study_ids=self.study_ids,
        )


def inverse_sqrt(matrix, floor: float = 1e-12) -> np.ndarray:
    """Symmetric inverse square root via eigendecomposition."""
    w, V = np.linalg.eigh(matrix)
    if w.min() <= floor:
        raise np.linalg.LinAlgError("matrix is singular or not positive definite")
    return (V / np.sqrt(w)) @ V.T


def univariate_scores(sigmas, z, study_ids=()) -> ScoreMatrix:
    """Scores for the univariate bias: s_ik = z_k, a_i = sigma_i^-1 / sum sigma^-2."""
    sig = np.asarray(sigmas, dtype=float)
    if np.any(sig <= 0):
        raise ValueError("sigmas must be positive")
    z = np.asarray(z, dtype=float).reshape(len(z), -1)[:, :1]
    weights = (1.0 / sig) / np.sum(sig**-2)
    raw = np.broadcast_to(z[:, 0], (sig.size, z.shape[0])).copy()
    return ScoreMatrix(
        raw=raw,
        weights=weights,
        keys=sig**2,
        loadings=weights.reshape(-1, 1, 1).copy(),
        z=z,
        contrast=np.ones(1),
        study_ids=tuple(study_ids),
    )


def bivariate_scores(sigma_matrices, contrast, z, beta=(1.0, 1.0), study_ids=()) -> ScoreMatrix:
    """Scores s_ik = c' A Sigma_i^{-1/2} z_k with A = (sum_i Sigma_i^{-1})^{-1}.

    The key is beta1 * Sigma_i[0, 0] + beta2 * Sigma_i[1, 1].
    """
    sig = np.asarray(sigma_matrices, dtype=float)
    c = np.asarray(contrast, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != 2:
        raise ValueError("bivariate scores need draws of shape (K, 2)")
    if c.shape != (2,) or not np.all(np.isfinite(c)):
        raise ValueError("contrast must be two finite numbers")
    ids = tuple(study_ids) or tuple(str(i + 1) for i in range(len(sig)))
    roots = np.empty_like(sig)
    for i, S in enumerate(sig):
        try:
            roots[i] = inverse_sqrt(S)
        except np.linalg.LinAlgError:
            raise ValueError(f"marginal covariance of study {ids[i]!r} is singular") from None
    A = np.linalg.inv(np.linalg.inv(sig).sum(axis=0))
    loadings = A @ roots  # (N, 2, 2)
    directions = np.einsum("j,ijk->ik", c, loadings)  # (N, 2)
    return ScoreMatrix(
        raw=directions @ z.T,
        weights=np.ones(len(sig)),
        keys=beta[0] * sig[:, 0, 0] + beta[1] * sig[:, 1, 1],
        loadings=loadings,
        z=z,
        contrast=c,
        study_ids=ids,
    )


def default_contrast(fit) -> np.ndarray:
    """(1, -tau12/tau2^2): shifts the SROC curve by c'b."""
    return np.array([1.0, -fit.tau12 / fit.tau2_sq])


def build_scores(fit, z, *, contrast=None, beta=(1.0, 1.0)) -> ScoreMatrix:
    """Scores for a fitted model with heterogeneity held at the fit's values."""
    from .fit import ReitsmaFit, UnivariateFit

    if isinstance(fit, UnivariateFit):
        return univariate_scores(fit.sigmas, z)
    if isinstance(fit, ReitsmaFit):
        c = default_contrast(fit) if contrast is None else contrast
        return bivariate_scores(
            fit.marginal_covariances(), c, z, beta=beta, study_ids=fit.study_ids
        )
    raise TypeError(f"unsupported fit type {type(fit).__name__}")


def _check_probability(q):
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)) or np.any(~np.isfinite(q)):
        raise ValueError("selection probability must lie in [0, 1]")
    return q


def inner_envelope(sorted_scores, p_i):
    """Exact max of (1/K) sum_k s_k p_k over 0 <= p_k <= 1 with mean(p_k) = p_i.

    ``sorted_scores`` must be in descending order. The optimum takes the top
    floor(K p_i) draws fully and the next one fractionally. Vectorised over
    ``p_i``.
    """
    s = np.asarray(sorted_scores, dtype=float)
    q = _check_probability(p_i)
    K = s.size
    csum = np.concatenate(([0.0], np.cumsum(s)))
    kq = K * q
    m = np.minimum(np.floor(kq).astype(int), K)
    nxt = np.where(m < K, s[np.minimum(m, K - 1)], 0.0)
    out = (csum[m] + (kq - m) * nxt) / K
    return float(out) if np.ndim(out) == 0 else out


def envelope_ratio(sorted_scores, p_i):
    """G(p_i) / p_i: the mean of the selected top fraction; s_max at p_i = 0."""
    s = np.asarray(sorted_scores, dtype=float)
    q = _check_probability(p_i)
    g = inner_envelope(s, q)
    out = np.where(q > 0, np.asarray(g) / np.where(q > 0, q, 1.0), s[0])
    return float(out) if np.ndim(out) == 0 else out


def selection_weights(raw_row, p_i: float) -> np.ndarray:
    """Optimal within-study p_ik for one study, aligned with the draw order."""
    K = raw_row.size
    order = np.argsort(-raw_row, kind="stable")
    kq = K * p_i
    m = min(int(np.floor(kq)), K)
    w = np.zeros(K)
    w[order[:m]] = 1.0
    if m < K:
        w[order[m]] = kq - m
    return w
