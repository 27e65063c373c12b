import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from clarity_coverage.clarity import (
    ClarityDynParams,
    ClarityMap,
    UnreachableTarget,
    clarity_closed_form,
    clarity_from_variance,
    clarity_map_from_filter,
    clarity_rate,
    integrate_clarity_rk4,
    sensing_C_V,
    sensing_S,
    sensing_S_from_distance,
    sensing_S_grad,
    sensing_S_simplified,
    time_to_clarity,
    variance_from_clarity,
)
from clarity_coverage.grid import GridSpec
from clarity_coverage.kernels import KernelParams
from clarity_coverage.ngpkf import NGPKF, FilterState, MeasurementBatch

WIND = KernelParams("matern12", 3.49, 0.944, 0.25)

S_vals = st.floats(0.05, 60)
W_vals = st.floats(1e-3, 2)
q_vals = st.floats(0, 0.95)


def test_clarity_from_variance():
    assert clarity_from_variance(0.0) == 1.0
    assert clarity_from_variance(1.0) == 0.5
    assert clarity_from_variance(1e9) < 1e-8
    assert variance_from_clarity(0.5) == pytest.approx(1.0)
    assert variance_from_clarity(clarity_from_variance(3.7)) == pytest.approx(3.7)


def test_C_V_at_robot_position():
    C, V = sensing_C_V(WIND, [1.0, 1.0], [1.0, 1.0], 5.0)
    assert C == 1.0
    assert V == pytest.approx(0.25, abs=1e-12)


def test_C_V_far_away():
    C, V = sensing_C_V(WIND, [0.0, 0.0], [1e3, 0.0], 5.0)
    assert C < 1e-100
    assert V == pytest.approx(WIND.variance + 0.25)


def test_C_V_analytic_matern():
    kp = KernelParams("matern12", 1.0, 1.0, 0.25)
    C, V = sensing_C_V(kp, [0.0, 0.0], [1.0, 0.0], 5.0)
    assert C == pytest.approx(np.exp(-1))
    assert V == pytest.approx(1 - np.exp(-2) + 0.25)


def test_S_at_robot_position():
    assert sensing_S(WIND, [0.2, 0.2], [0.2, 0.2], 5.0) == pytest.approx(20.0, abs=1e-12)
    assert sensing_S(WIND, [0.0, 0.0], [50.0, 0.0], 5.0) < 1e-30


@pytest.mark.parametrize("family", ["matern12", "se"])
def test_S_maximised_on_top(family):
    kp = KernelParams(family, 3.49, 0.944, 0.25)
    d = np.linspace(0, 5 * kp.length_scale, 2001)
    S = sensing_S_from_distance(kp, d, 5.0)
    assert np.argmax(S) == 0


def test_simplified_S_only_matches_unit_variance():
    unit = KernelParams("matern12", 1.0, 0.944, 0.25)
    d = np.linspace(0.01, 2, 30)
    np.testing.assert_allclose(sensing_S_simplified(unit, d, 5.0), sensing_S_from_distance(unit, d, 5.0), rtol=1e-12)
    # with k(0) = sigma^2 != 1 the closed expression disagrees with C^2 dt / V
    gap = sensing_S_simplified(WIND, d, 5.0) / sensing_S_from_distance(WIND, d, 5.0)
    assert np.all(np.abs(gap - 1) > 1e-3)


@given(x=st.tuples(st.floats(0, 3), st.floats(0, 3)), p=st.tuples(st.floats(0, 3), st.floats(0, 3)))
def test_S_symmetric(x, p):
    assert sensing_S(WIND, x, p, 5.0) == pytest.approx(sensing_S(WIND, p, x, 5.0), rel=1e-14)


@pytest.mark.parametrize("family,delta", [("se", 0.0), ("matern12", 0.01)])
def test_S_grad_finite_difference(family, delta):
    kp = KernelParams(family, 3.49, 0.944, 0.25)
    rng = np.random.default_rng(0)
    x = np.array([1.0, 0.7])
    pts = rng.uniform(0, 2, (20, 2))

    def S(xv):
        d = np.sqrt(((xv - pts) ** 2).sum(axis=1) + delta**2)
        return sensing_S_from_distance(kp, d, 5.0)

    h = 1e-6
    fd = np.column_stack([(S(x + h * e) - S(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(sensing_S_grad(kp, x, pts, 5.0, delta), fd, rtol=1e-6, atol=1e-8)


# ---------------------------------------------------------------------------
# dynamics


def test_rate_special_points():
    assert clarity_rate(1.0, 7.0, 0.3) == pytest.approx(-0.3)
    assert clarity_rate(0.0, 7.0, 0.3) == pytest.approx(7.0)


@given(S=S_vals, W=W_vals)
def test_rate_vanishes_at_equilibrium(S, W):
    g0 = math.sqrt(S / W)
    q_inf = g0 / (1 + g0)
    assert abs(clarity_rate(q_inf, S, W)) <= 1e-12 * max(S, W)


def test_closed_form_initial_and_equilibrium():
    assert clarity_closed_form(ClarityDynParams(3.0, 0.2, 0.37), 0.0) == pytest.approx(0.37, abs=1e-15)
    t = np.linspace(0, 100, 11)
    np.testing.assert_allclose(clarity_closed_form(ClarityDynParams(0.4, 0.4, 0.5), t), 0.5, atol=1e-15)


def test_closed_form_vs_rk4_example():
    dyn = ClarityDynParams(20.0, 0.01, 0.2)
    ref = integrate_clarity_rk4(0.2, 20.0, 0.01, 1.0, 1e-4)[-1]
    assert clarity_closed_form(dyn, 1.0) == pytest.approx(ref, abs=1e-6)


@pytest.mark.parametrize("S,W,q0", [(0.0, 0.05, 0.6), (2.0, 0.0, 0.1), (0.0, 0.0, 0.3)])
def test_degenerate_closed_forms_vs_rk4(S, W, q0):
    ref = integrate_clarity_rk4(q0, S, W, 20.0, 1e-3)
    t = np.arange(len(ref)) * 1e-3
    np.testing.assert_allclose(clarity_closed_form(ClarityDynParams(S, W, q0), t), ref, atol=1e-9)


@settings(max_examples=60)
@given(S=S_vals, W=W_vals, q0=st.floats(0, 1))
def test_closed_form_bounded_and_monotone(S, W, q0):
    dyn = ClarityDynParams(S, W, q0)
    t = np.linspace(0, 200, 400)
    q = clarity_closed_form(dyn, t)
    lo, hi = min(q0, dyn.q_inf), max(q0, dyn.q_inf)
    assert np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12)
    step = np.diff(q) if q0 <= dyn.q_inf else -np.diff(q)
    assert np.all(step >= -1e-12)


@settings(max_examples=60)
@given(S=S_vals, W=W_vals, q0=q_vals)
def test_closed_form_derivative_matches_rate(S, W, q0):
    dyn = ClarityDynParams(S, W, q0)
    h = 1e-6
    fd = (clarity_closed_form(dyn, h) - q0) / h
    # forward difference; second-order term bounded by h * |q''|
    curv = abs(2 * S * (1 - q0) + 2 * W * q0) * abs(clarity_rate(q0, S, W))
    assert fd == pytest.approx(float(clarity_rate(q0, S, W)), abs=1e-5 + h * curv)


# ---------------------------------------------------------------------------
# time to clarity


def test_tau_zero_for_same_clarity():
    assert time_to_clarity(ClarityDynParams(5.0, 0.1, 0.3), 0.3) == 0.0


@settings(max_examples=80)
@given(S=S_vals, W=W_vals, q0=q_vals, frac=st.floats(0.0, 0.999))
def test_tau_roundtrip(S, W, q0, frac):
    dyn = ClarityDynParams(S, W, q0)
    assume(q0 < dyn.q_inf - 1e-3)
    qf = q0 + frac * (dyn.q_inf - 1e-3 - q0)
    tau = time_to_clarity(dyn, qf)
    assert tau >= 0
    assert clarity_closed_form(dyn, tau) == pytest.approx(qf, abs=1e-9)


def test_tau_blows_up_near_equilibrium():
    dyn = ClarityDynParams(20.0, 0.01, 0.1)
    assert time_to_clarity(dyn, dyn.q_inf - 1e-9) > time_to_clarity(dyn, dyn.q_inf - 1e-3)


def test_tau_errors():
    dyn = ClarityDynParams(1.0, 1.0, 0.2)
    with pytest.raises(UnreachableTarget):
        time_to_clarity(dyn, 0.5)
    with pytest.raises(ValueError):
        time_to_clarity(dyn, 0.1)
    with pytest.raises(UnreachableTarget):
        time_to_clarity(ClarityDynParams(0.0, 1.0, 0.2), 0.3)


def test_tau_without_decay():
    dyn = ClarityDynParams(2.0, 0.0, 0.1)
    tau = time_to_clarity(dyn, 0.9)
    assert clarity_closed_form(dyn, tau) == pytest.approx(0.9, abs=1e-12)


@settings(max_examples=40)
@given(S=S_vals, W=W_vals, q0=st.floats(0, 0.5))
def test_tau_monotonicity(S, W, q0):
    dyn = ClarityDynParams(S, W, q0)
    assume(dyn.q_inf - q0 > 0.01)
    q1 = q0 + 0.3 * (dyn.q_inf - q0)
    q2 = q0 + 0.6 * (dyn.q_inf - q0)
    assert time_to_clarity(dyn, q2) > time_to_clarity(dyn, q1)
    faster = ClarityDynParams(2 * S, W, q0)
    assert time_to_clarity(faster, q1) < time_to_clarity(dyn, q1)


# ---------------------------------------------------------------------------
# clarity maps


def test_clarity_map_prior():
    grid = GridSpec(3, 2, 0.2)
    flt = NGPKF(grid, WIND)
    cmap = clarity_map_from_filter(flt.prior(), grid)
    np.testing.assert_allclose(cmap.q, 1 / 13.1801, rtol=1e-7)
    assert cmap.q[0] == pytest.approx(0.07587, abs=1e-5)


def test_clarity_map_zero_variance():
    grid = GridSpec(2, 2, 0.2)
    st_ = FilterState(0.0, np.zeros(4), np.zeros((4, 4)))
    assert np.all(clarity_map_from_filter(st_, grid).q == 1.0)


def test_exact_measurement_drives_clarity_to_one():
    grid = GridSpec(3, 3, 0.3)
    kp = KernelParams("matern12", 1.0, 0.5, 0.0)
    flt = NGPKF(grid, kp)
    p = grid.points[4]
    post = flt.correct(flt.prior(), MeasurementBatch(0.0, [p], [0.7], 1e-12))
    q = clarity_map_from_filter(post, grid).q
    assert q[4] > 1 - 1e-6


def test_clarity_map_validation():
    grid = GridSpec(2, 1, 1.0)
    with pytest.raises(ValueError):
        ClarityMap(grid, [0.5, 1.2], 0.8)
    with pytest.raises(ValueError):
        ClarityMap(grid, [0.5, 0.5], 1.0)
    with pytest.raises(ValueError):
        ClarityMap(grid, [0.5], 0.8)
