"""Ordinary maximum-likelihood fits of the univariate random-effects model and
the bivariate (Reitsma) normal model for logit sensitivity/specificity."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from .data import bivariate_arrays

LOG_2PI = np.log(2.0 * np.pi)
# log tau below this is reported as a zero variance component
BOUNDARY_LOG_TAU = -8.0
_LOG_TAU_BOUNDS = (-12.0, 6.0)
_ATANH_RHO_BOUNDS = (-10.0, 10.0)

PARAM_ORDER = ("theta1", "theta2", "tau1_sq", "tau12", "tau2_sq")


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# univariate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnivariateFit:
    theta: float
    tau_sq: float
    se_theta: float
    loglik: float
    at_boundary: bool
    n_studies: int
    s: tuple = field(repr=False, default=())
    y: tuple = field(repr=False, default=())

    @property
    def sigmas(self) -> np.ndarray:
        """Marginal standard deviations sqrt(s_i^2 + tau^2)."""
        return np.sqrt(np.asarray(self.s) ** 2 + self.tau_sq)

    def ci(self, level: float = 0.95, shift: float = 0.0) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + level / 2.0)
        centre = self.theta + shift
        return centre - z * self.se_theta, centre + z * self.se_theta

    def to_dict(self) -> dict:
        lo, hi = self.ci()
        return {
            "kind": "univariate",
            "n_studies": self.n_studies,
            "theta": self.theta,
            "tau_sq": self.tau_sq,
            "se_theta": self.se_theta,
            "ci95": [lo, hi],
            "loglik": self.loglik,
            "at_boundary": self.at_boundary,
        }


def _univariate_profile(tau_sq, y, s2):
    var = s2 + tau_sq
    w = 1.0 / var
    theta = np.sum(w * y) / np.sum(w)
    r = y - theta
    ll = -0.5 * np.sum(LOG_2PI + np.log(var) + r * r / var)
    return ll, theta, w


def fit_univariate_ml(obs) -> UnivariateFit:
    """ML estimates of (theta, tau^2) for y_i ~ N(theta, s_i^2 + tau^2).

    theta is profiled out as the inverse-variance weighted mean; tau^2 is
    found by bounded Brent search on the profile likelihood, with the
    boundary tau^2 = 0 taken whenever the score there is non-positive.
    """
    obs = list(obs)
    if len(obs) < 2:
        raise ValueError("fit_univariate_ml needs at least 2 observations")
    order = sorted(range(len(obs)), key=lambda i: (obs[i].y, obs[i].s))
    y = np.array([obs[i].y for i in order], dtype=float)
    s2 = np.array([obs[i].s for i in order], dtype=float) ** 2

    _, theta0, w0 = _univariate_profile(0.0, y, s2)
    score0 = 0.5 * np.sum(w0 * w0 * (y - theta0) ** 2 - w0)
    if score0 <= 0.0:
        tau_sq = 0.0
    else:
        upper = 10.0 * (np.var(y) + np.max(s2)) + 1.0
        res = optimize.minimize_scalar(
            lambda t: -_univariate_profile(t, y, s2)[0],
            bounds=(0.0, upper),
            method="bounded",
            options={"xatol": 1e-12, "maxiter": 1000},
        )
        if not res.success:
            raise ConvergenceError(f"tau^2 search did not converge: {res.message}")
        tau_sq = float(res.x)
    ll, theta, w = _univariate_profile(tau_sq, y, s2)
    return UnivariateFit(
        theta=float(theta),
        tau_sq=tau_sq,
        se_theta=float(np.sum(w) ** -0.5),
        loglik=float(ll),
        at_boundary=tau_sq == 0.0,
        n_studies=len(obs),
        s=tuple(o.s for o in obs),
        y=tuple(o.y for o in obs),
    )


def univariate_fixed(fit: UnivariateFit, tau_sq: float) -> UnivariateFit:
    """Re-profile theta at a user-chosen heterogeneity value (sensitivity use)."""
    y = np.asarray(fit.y, dtype=float)
    s2 = np.asarray(fit.s, dtype=float) ** 2
    ll, theta, w = _univariate_profile(float(tau_sq), y, s2)
    return replace(
        fit,
        theta=float(theta),
        tau_sq=float(tau_sq),
        se_theta=float(np.sum(w) ** -0.5),
        loglik=float(ll),
        at_boundary=tau_sq == 0.0,
    )


# ---------------------------------------------------------------------------
# bivariate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReitsmaFit:
    theta1: float
    theta2: float
    tau1_sq: float
    tau12: float
    tau2_sq: float
    loglik: float
    cov: np.ndarray | None = field(repr=False)
    converged: bool = True
    tau1_at_boundary: bool = False
    tau2_at_boundary: bool = False
    rho_at_boundary: bool = False
    iterations: int = 0
    trace: tuple = field(repr=False, default=())
    y: np.ndarray | None = field(repr=False, default=None)
    s2: np.ndarray | None = field(repr=False, default=None)
    study_ids: tuple = field(repr=False, default=())

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2])

    @property
    def omega(self) -> np.ndarray:
        return np.array([[self.tau1_sq, self.tau12], [self.tau12, self.tau2_sq]])

    @property
    def rho(self) -> float:
        denom = np.sqrt(self.tau1_sq * self.tau2_sq)
        return float(self.tau12 / denom) if denom > 0 else 0.0

    @property
    def params(self) -> np.ndarray:
        """Vector in ``PARAM_ORDER``, the ordering used by ``cov``."""
        return np.array([self.theta1, self.theta2, self.tau1_sq, self.tau12, self.tau2_sq])

    @property
    def cov_available(self) -> bool:
        return self.cov is not None

    @property
    def n_studies(self) -> int:
        return 0 if self.y is None else len(self.y)

    def marginal_covariances(self) -> np.ndarray:
        """Per-study Sigma_i = S_i + Omega, shape (N, 2, 2)."""
        sig = np.empty((self.n_studies, 2, 2))
        sig[:, 0, 0] = self.s2[:, 0] + self.tau1_sq
        sig[:, 1, 1] = self.s2[:, 1] + self.tau2_sq
        sig[:, 0, 1] = sig[:, 1, 0] = self.tau12
        return sig

    def to_dict(self) -> dict:
        return {
            "kind": "dta",
            "n_studies": self.n_studies,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "tau1_sq": self.tau1_sq,
            "tau12": self.tau12,
            "tau2_sq": self.tau2_sq,
            "rho": self.rho,
            "loglik": self.loglik,
            "converged": self.converged,
            "tau1_at_boundary": self.tau1_at_boundary,
            "tau2_at_boundary": self.tau2_at_boundary,
            "rho_at_boundary": self.rho_at_boundary,
            "iterations": self.iterations,
            "param_order": list(PARAM_ORDER),
            "cov_available": self.cov_available,
            "cov": None if self.cov is None else self.cov.tolist(),
        }


def _gls(y, s2, a, b, c):
    """GLS theta and log-likelihood for Omega = [[a, b], [b, c]]."""
    d1 = s2[:, 0] + a
    d2 = s2[:, 1] + c
    det = d1 * d2 - b * b
    i11, i22, i12 = d2 / det, d1 / det, -b / det
    W = np.array([[i11.sum(), i12.sum()], [i12.sum(), i22.sum()]])
    rhs = np.array(
        [np.sum(i11 * y[:, 0] + i12 * y[:, 1]), np.sum(i12 * y[:, 0] + i22 * y[:, 1])]
    )
    theta = np.linalg.solve(W, rhs)
    r1 = y[:, 0] - theta[0]
    r2 = y[:, 1] - theta[1]
    quad = i11 * r1 * r1 + 2.0 * i12 * r1 * r2 + i22 * r2 * r2
    ll = -0.5 * np.sum(2.0 * LOG_2PI + np.log(det) + quad)
    return theta, ll


def reitsma_loglik(params, y, s2) -> float:
    """Full log-likelihood at (theta1, theta2, tau1_sq, tau12, tau2_sq)."""
    t1, t2, a, b, c = params
    d1 = s2[:, 0] + a
    d2 = s2[:, 1] + c
    det = d1 * d2 - b * b
    if np.any(det <= 0) or np.any(d1 <= 0):
        return -np.inf
    r1 = y[:, 0] - t1
    r2 = y[:, 1] - t2
    quad = (d2 * r1 * r1 - 2.0 * b * r1 * r2 + d1 * r2 * r2) / det
    return float(-0.5 * np.sum(2.0 * LOG_2PI + np.log(det) + quad))


def _omega_from(x):
    t1, t2 = np.exp(x[0]), np.exp(x[1])
    r = np.tanh(x[2])
    return t1 * t1, r * t1 * t2, t2 * t2


def _moment_start(y, s2):
    v1 = max(np.var(y[:, 0]) - np.mean(s2[:, 0]), 0.01)
    v2 = max(np.var(y[:, 1]) - np.mean(s2[:, 1]), 0.01)
    if np.std(y[:, 0]) > 0 and np.std(y[:, 1]) > 0:
        r = float(np.clip(np.corrcoef(y[:, 0], y[:, 1])[0, 1], -0.9, 0.9))
    else:
        r = 0.0
    return np.array([0.5 * np.log(v1), 0.5 * np.log(v2), np.arctanh(r)])


def numerical_hessian(f, x, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian with steps ``rel_step * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * np.maximum(1.0, np.abs(x))
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / (h[i] * h[i])
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def _covariance(params, y, s2):
    H = numerical_hessian(lambda p: reitsma_loglik(p, y, s2), params)
    info = -H
    if not np.all(np.isfinite(info)):
        return None
    eig = np.linalg.eigvalsh(info)
    if eig.min() <= 1e-10 * max(1.0, eig.max()):
        return None
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T)


def fit_reitsma_ml(
    obs,
    *,
    n_jitter: int = 4,
    seed: int = 0,
    max_iter: int = 2000,
    xtol: float = 1e-9,
) -> ReitsmaFit:
    """Maximum-likelihood fit of y_i ~ N(theta, S_i + Omega).

    theta is profiled out by GLS. The search runs over
    (log tau1, log tau2, atanh rho) with Nelder-Mead from a
    method-of-moments start plus ``n_jitter`` perturbed starts; the best
    optimum is kept. Input order does not affect the result.
    """
    obs = list(obs)
    if len(obs) < 3:
        raise ValueError("fit_reitsma_ml needs at least 3 observations")
    y_in, s2_in = bivariate_arrays(obs)
    if np.any(s2_in <= 0) or not np.all(np.isfinite(y_in)):
        raise ValueError("within-study variances must be positive and outcomes finite")
    order = np.lexsort((s2_in[:, 1], s2_in[:, 0], y_in[:, 1], y_in[:, 0]))
    y, s2 = y_in[order], s2_in[order]

    def negll(x):
        return -_gls(y, s2, *_omega_from(x))[1]

    rng = np.random.default_rng(seed)
    start = _moment_start(y, s2)
    starts = [start] + [start + rng.normal(0.0, 0.5, size=3) for _ in range(n_jitter)]
    bounds = [_LOG_TAU_BOUNDS, _LOG_TAU_BOUNDS, _ATANH_RHO_BOUNDS]

    best, best_trace = None, None
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        trace = [-negll(x0)]
        res = optimize.minimize(
            negll,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            callback=lambda xk: trace.append(-negll(xk)),
            options={"maxiter": max_iter, "xatol": xtol, "fatol": 1e-12},
        )
        if best is None or res.fun < best.fun:
            best, best_trace = res, trace

    x = best.x
    a, b, c = _omega_from(x)
    tau1_b = bool(x[0] < BOUNDARY_LOG_TAU)
    tau2_b = bool(x[1] < BOUNDARY_LOG_TAU)
    if tau1_b:
        a, b = 0.0, 0.0
    if tau2_b:
        c, b = 0.0, 0.0
    theta, ll = _gls(y, s2, a, b, c)
    params = np.array([theta[0], theta[1], a, b, c])
    return ReitsmaFit(
        theta1=float(theta[0]),
        theta2=float(theta[1]),
        tau1_sq=float(a),
        tau12=float(b),
        tau2_sq=float(c),
        loglik=float(ll),
        cov=_covariance(params, y, s2),
        converged=bool(best.success),
        tau1_at_boundary=tau1_b,
        tau2_at_boundary=tau2_b,
        rho_at_boundary=bool(abs(x[2]) > 8.0),
        iterations=int(best.nit),
        trace=tuple(best_trace),
        y=y_in,
        s2=s2_in,
        study_ids=tuple(o.study_id for o in obs),
    )


def reitsma_fixed(fit: ReitsmaFit, tau1_sq: float, tau12: float, tau2_sq: float) -> ReitsmaFit:
    """Plug in alternative heterogeneity values; theta is re-profiled by GLS.

    The covariance of the original ML fit is carried over unchanged, which is
    how the bound intervals are formed anyway.
    """
    if tau12 * tau12 > tau1_sq * tau2_sq + 1e-12:
        raise ValueError("heterogeneity matrix is not positive semidefinite")
    theta, ll = _gls(fit.y, fit.s2, tau1_sq, tau12, tau2_sq)
    return replace(
        fit,
        theta1=float(theta[0]),
        theta2=float(theta[1]),
        tau1_sq=float(tau1_sq),
        tau12=float(tau12),
        tau2_sq=float(tau2_sq),
        loglik=float(ll),
    )
