"""SROC curve, its area (SAUC), the summary operating point and the
delta-method interval for SAUC.

The curve is logit^-1[theta1 - (tau12/tau2^2)(logit(x) + theta2) + shift],
where ``shift`` is the contrast of a bias vector on the logit scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

DEFAULT_NODES = 128


@dataclass(frozen=True)
class SrocParams:
    theta1: float
    theta2: float
    tau1_sq: float
    tau12: float
    tau2_sq: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.tau2_sq > 0:
            raise ValueError("tau2_sq must be positive for the SROC slope to exist")

    @classmethod
    def from_fit(cls, fit, shift: float = 0.0) -> "SrocParams":
        return cls(fit.theta1, fit.theta2, fit.tau1_sq, fit.tau12, fit.tau2_sq, shift)

    @property
    def slope(self) -> float:
        """Coefficient on logit(x); equals -tau12/tau2^2."""
        return -self.tau12 / self.tau2_sq

    def linear_predictor(self, logit_x):
        return self.theta1 + self.slope * (logit_x + self.theta2) + self.shift


def sroc_point(x, params: SrocParams):
    """Sensitivity on the SROC curve at false-positive rate ``x`` in (0, 1)."""
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr <= 0) | (x_arr >= 1)) or np.any(~np.isfinite(x_arr)):
        raise ValueError("x must lie strictly inside (0, 1)")
    out = special.expit(params.linear_predictor(special.logit(x_arr)))
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=32)
def _logit_nodes(n: int):
    # x = expit(t) with t = u / (1 - u^2), u in (-1, 1); Gauss-Legendre in u.
    u, w = np.polynomial.legendre.leggauss(n)
    t = u / (1.0 - u * u)
    dt = (1.0 + u * u) / (1.0 - u * u) ** 2
    weight = w * dt * special.expit(t) * special.expit(-t)
    t.setflags(write=False)
    weight.setflags(write=False)
    return t, weight


def _scaled_nodes(params: SrocParams, nodes: int) -> int:
    # steep curves (|slope| > 3) get proportionally more nodes
    return nodes * max(1, int(np.ceil(abs(params.slope) / 3.0)))


def sauc(params: SrocParams, nodes: int = DEFAULT_NODES) -> float:
    """Area under the SROC curve over x in (0, 1)."""
    t, w = _logit_nodes(_scaled_nodes(params, nodes))
    return float(np.sum(w * special.expit(params.linear_predictor(t))))


def sauc_gradient(params: SrocParams, nodes: int = DEFAULT_NODES) -> np.ndarray:
    """d SAUC / d(theta1, theta2, tau1_sq, tau12, tau2_sq) at fixed shift.

    The SROC curve depends on Omega only through tau12/tau2^2, so the
    tau1_sq entry is identically zero.
    """
    t, w = _logit_nodes(_scaled_nodes(params, nodes))
    s = special.expit(params.linear_predictor(t))
    ds = w * s * (1.0 - s)
    centred = t + params.theta2
    tau12, tau2_sq = params.tau12, params.tau2_sq
    return np.array(
        [
            ds.sum(),
            params.slope * ds.sum(),
            0.0,
            -np.sum(ds * centred) / tau2_sq,
            tau12 * np.sum(ds * centred) / tau2_sq**2,
        ]
    )


def sauc_ci_delta(
    fit,
    shift: float = 0.0,
    level: float = 0.95,
    *,
    variance_at: str = "estimate",
    nodes: int = DEFAULT_NODES,
) -> tuple[float, float]:
    """Delta-method interval for SAUC, built on the logit(SAUC) scale.

    The estimate covariance is always the no-bias ML covariance. With
    ``variance_at="estimate"`` (default) the gradient is taken on the
    unshifted curve and the interval is re-centred on the shifted SAUC;
    ``"shifted"`` evaluates the gradient on the shifted curve instead.
    """
    if fit.cov is None:
        raise ValueError("estimate covariance unavailable; cannot form delta-method interval")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if variance_at not in ("estimate", "shifted"):
        raise ValueError("variance_at must be 'estimate' or 'shifted'")
    base = SrocParams.from_fit(fit, shift if variance_at == "shifted" else 0.0)
    grad = sauc_gradient(base, nodes)
    var = float(grad @ np.asarray(fit.cov) @ grad)
    value = sauc(SrocParams.from_fit(fit, shift), nodes)
    half = stats.norm.ppf(0.5 + level / 2.0) * np.sqrt(max(var, 0.0)) / (value * (1.0 - value))
    centre = special.logit(value)
    return float(special.expit(centre - half)), float(special.expit(centre + half))


def sop(fit) -> tuple[float, float]:
    """Summary operating point (sensitivity, specificity)."""
    return float(special.expit(fit.theta1)), float(special.expit(fit.theta2))


def sroc_grid(n: int = 201, lo: float = 0.005, hi: float = 0.995) -> np.ndarray:
    return np.linspace(lo, hi, n)


def sroc_curve(params: SrocParams, x=None) -> tuple[np.ndarray, np.ndarray]:
    x = sroc_grid() if x is None else np.asarray(x, dtype=float)
    return x, np.asarray(sroc_point(x, params))
