import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from pubbound.sroc import (
    SrocParams,
    sauc,
    sauc_ci_delta,
    sauc_gradient,
    sop,
    sroc_curve,
    sroc_point,
)


def flat(theta1):
    return SrocParams(theta1, 0.3, 0.2, 0.0, 0.5)


def test_flat_curves():
    assert sroc_point(0.3, flat(0.0)) == pytest.approx(0.5)
    assert sroc_point(0.7, flat(special.logit(0.9))) == pytest.approx(0.9)
    assert sauc(flat(0.0)) == pytest.approx(0.5, abs=1e-10)
    assert sauc(flat(special.logit(0.9))) == pytest.approx(0.9, abs=1e-10)


def test_point_hand_value():
    params = SrocParams(1.0, 1.0, 0.171, -0.283, 0.588)
    assert sroc_point(0.5, params) == pytest.approx(special.expit(1 + 0.283 / 0.588), abs=1e-12)
    assert sroc_point(0.5, params) == pytest.approx(0.8148, abs=1e-4)


@pytest.mark.parametrize("x", [0.0, 1.0, -0.1, 1.5, np.nan])
def test_point_domain(x):
    with pytest.raises(ValueError):
        sroc_point(x, flat(0.0))


def test_requires_positive_tau2():
    with pytest.raises(ValueError):
        SrocParams(0, 0, 0.1, 0.0, 0.0)


params_st = st.builds(
    SrocParams,
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.floats(0.01, 2),
    st.floats(-1.5, 1.5),
    st.floats(0.05, 3),
    st.floats(-2, 2),
)


@settings(max_examples=40, deadline=None)
@given(params_st)
def test_sauc_matches_adaptive_quadrature(params):
    ref, _ = integrate.quad(lambda x: sroc_point(x, params), 0, 1, epsabs=1e-13, epsrel=1e-13, limit=500)
    assert sauc(params) == pytest.approx(ref, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(params_st)
def test_quadrature_refinement(params):
    assert abs(sauc(params, 256) - sauc(params, 128)) < 1e-9


def test_refinement_on_troponin(troponin_fit):
    p = SrocParams.from_fit(troponin_fit)
    assert abs(sauc(p, 256) - sauc(p, 128)) < 1e-9


@settings(max_examples=40)
@given(params_st)
def test_curve_monotone_by_sign(params):
    x, y = sroc_curve(params)
    d = np.diff(y)
    if params.tau12 < 0:
        assert np.all(d >= 0)
    elif params.tau12 > 0:
        assert np.all(d <= 0)
    else:
        assert np.all(d == 0)


@settings(max_examples=30)
@given(params_st)
def test_sauc_increasing_in_shift(params):
    shifts = np.linspace(-2, 2, 21)
    vals = [sauc(dataclasses.replace(params, shift=s)) for s in shifts]
    assert np.all(np.diff(vals) > 0)


@settings(max_examples=30, deadline=None)
@given(params_st)
def test_gradient_matches_finite_differences(params):
    base = np.array([params.theta1, params.theta2, params.tau1_sq, params.tau12, params.tau2_sq])
    h = 1e-6
    fd = []
    for e in np.eye(5):
        hi = SrocParams(*(base + h * e), shift=params.shift)
        lo = SrocParams(*(base - h * e), shift=params.shift)
        fd.append((sauc(hi) - sauc(lo)) / (2 * h))
    assert np.allclose(sauc_gradient(params), fd, atol=1e-6)


def test_troponin_sauc_and_ci(troponin_fit):
    assert sauc(SrocParams.from_fit(troponin_fit)) == pytest.approx(0.724, abs=0.01)
    lo, hi = sauc_ci_delta(troponin_fit)
    assert lo == pytest.approx(0.639, abs=0.015)
    assert hi == pytest.approx(0.795, abs=0.015)


def test_ci_at_zero_shift_same_for_both_readings(troponin_fit):
    assert sauc_ci_delta(troponin_fit, 0.0, variance_at="shifted") == sauc_ci_delta(troponin_fit, 0.0)


@pytest.mark.parametrize("shift", [-3.0, -0.5, 0.0, 1.0, 4.0])
@pytest.mark.parametrize("variance_at", ["estimate", "shifted"])
def test_ci_inside_unit_interval(troponin_fit, shift, variance_at):
    lo, hi = sauc_ci_delta(troponin_fit, shift, variance_at=variance_at)
    value = sauc(SrocParams.from_fit(troponin_fit, shift))
    assert 0 < lo <= value <= hi < 1


def test_zero_covariance_collapses(troponin_fit):
    fit = dataclasses.replace(troponin_fit, cov=np.zeros((5, 5)))
    lo, hi = sauc_ci_delta(fit, 0.3)
    value = sauc(SrocParams.from_fit(fit, 0.3))
    assert lo == pytest.approx(value, abs=1e-14) and hi == pytest.approx(value, abs=1e-14)


def test_missing_covariance_errors(troponin_fit):
    with pytest.raises(ValueError, match="covariance"):
        sauc_ci_delta(dataclasses.replace(troponin_fit, cov=None))


def test_sop(troponin_fit):
    zero = dataclasses.replace(troponin_fit, theta1=0.0, theta2=0.0)
    assert sop(zero) == (0.5, 0.5)
    pair = dataclasses.replace(troponin_fit, theta1=special.logit(0.8), theta2=special.logit(0.9))
    assert sop(pair) == pytest.approx((0.8, 0.9))
    sens, spec = sop(troponin_fit)
    assert 0 < sens < 1 and 0 < spec < 1


def test_curve_grid():
    x, y = sroc_curve(flat(0.0))
    assert x.size == 201 and x[0] == pytest.approx(0.005) and x[-1] == pytest.approx(0.995)
