import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from clarity_coverage.grid import GridSpec
from clarity_coverage.kernels import (
    FitError,
    KernelFamily,
    KernelParams,
    Variogram,
    empirical_variogram,
    estimate_temporal_variance,
    fit_best_kernel,
    fit_kernel,
    kernel_eval,
    kernel_matrix,
    variogram_model,
)

WIND = KernelParams("matern12", 3.49, 0.944, 0.25)
FAMILIES = [KernelFamily.MATERN12, KernelFamily.SQUARED_EXPONENTIAL]


def test_kernel_eval_wind_amplitude():
    assert kernel_eval(WIND, 0.0) == pytest.approx(12.1801, abs=1e-12)


@pytest.mark.parametrize("family", FAMILIES)
def test_kernel_eval_zero_lag_is_variance(family):
    kp = KernelParams(family, 1.7, 0.3)
    assert kernel_eval(kp, 0.0) == pytest.approx(1.7**2)


def test_kernel_eval_closed_forms():
    assert kernel_eval(KernelParams("matern12", 1, 1), 1.0) == pytest.approx(np.exp(-1))
    assert kernel_eval(KernelParams("se", 2, 0.5), 0.5) == pytest.approx(4 * np.exp(-0.5))


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        KernelParams("matern12", 0.0, 1.0)
    with pytest.raises(ValueError):
        KernelParams("matern12", 1.0, -1.0)
    with pytest.raises(ValueError):
        KernelParams("matern12", 1.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        KernelParams("periodic", 1.0, 1.0)


@pytest.mark.parametrize("family", FAMILIES)
@given(d=st.lists(st.floats(0, 50, allow_nan=False), min_size=2, max_size=30))
def test_kernel_monotone_in_distance(family, d):
    d = np.sort(np.asarray(d))
    k = kernel_eval(KernelParams(family, 3.49, 0.944), d)
    assert np.all(np.diff(k) <= 0)


def test_kernel_matrix_small_cases():
    p = np.array([[0.3, 0.4]])
    assert kernel_matrix(WIND, p) == pytest.approx(np.array([[WIND.variance]]))
    two = np.array([[0.3, 0.4], [0.3, 0.4]])
    K = kernel_matrix(WIND, two)
    assert np.allclose(K, WIND.variance)
    assert np.linalg.matrix_rank(K) == 1


@pytest.mark.parametrize("family", FAMILIES)
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 40))
def test_kernel_matrix_jittered_cholesky(family, seed, n):
    rng = np.random.default_rng(seed)
    kp = KernelParams(family, 3.49, 0.944)
    pts = rng.uniform(0, 2, size=(n, 2))
    if n > 2:
        pts[1] = pts[0]  # coincident points
    K = kernel_matrix(kp, pts)
    assert np.allclose(K, K.T)
    linalg.cholesky(K + 1e-9 * kp.variance * np.eye(n))


# ---------------------------------------------------------------------------
# empirical variogram


def test_variogram_constant_field_is_zero():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (30, 2))
    vg = empirical_variogram(pts, np.full(30, 4.2), n_bins=5)
    assert np.all(vg.semivariance == 0)


def test_variogram_two_samples():
    vg = empirical_variogram(np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([0.0, 2.0]), n_bins=4, max_lag=1.0)
    assert len(vg) == 1
    assert vg.semivariance[0] == pytest.approx(2.0)
    assert vg.counts[0] == 1
    assert vg.lags[0] == pytest.approx(1.0)


def test_variogram_needs_two_samples():
    with pytest.raises(ValueError):
        empirical_variogram(np.array([[0.0, 0.0]]), np.array([1.0]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_variogram_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 3, (25, 2))
    vals = rng.normal(size=25)
    perm = rng.permutation(25)
    a = empirical_variogram(pts, vals, n_bins=6)
    b = empirical_variogram(pts[perm], vals[perm], n_bins=6)
    assert np.array_equal(a.counts, b.counts)
    np.testing.assert_allclose(a.semivariance, b.semivariance, rtol=1e-12)
    np.testing.assert_allclose(a.lags, b.lags, rtol=1e-12)


def _gp_draws(kp, grid, n_draws, seed):
    K = kernel_matrix(kp, grid.points) + 1e-9 * kp.variance * np.eye(grid.size)
    Lc = linalg.cholesky(K, lower=True)
    rng = np.random.default_rng(seed)
    return (Lc @ rng.standard_normal((grid.size, n_draws))).T


def test_variogram_matches_model_on_average():
    # Monte-Carlo over 60 draws; the Matheron estimator is unbiased for the model semivariance
    kp = KernelParams("matern12", 1.0, 0.5)
    grid = GridSpec(12, 12, 0.1)
    draws = _gp_draws(kp, grid, 60, seed=1)
    vgs = [empirical_variogram(grid.points, d, n_bins=8, max_lag=0.6) for d in draws]
    mean_gamma = np.mean([v.semivariance for v in vgs], axis=0)
    model = variogram_model("matern12", vgs[0].lags, 1.0, 0.5)
    np.testing.assert_allclose(mean_gamma, model, rtol=0.12)


# ---------------------------------------------------------------------------
# fit_kernel


@pytest.mark.parametrize("family", FAMILIES)
def test_fit_exact_on_model_variogram(family):
    lags = np.linspace(0.05, 2.5, 20)
    vg = Variogram(lags, variogram_model(family, lags, 2.0, 0.5), np.arange(20, 0, -1))
    fit = fit_kernel(vg, family)
    assert fit.params.sigma == pytest.approx(2.0, abs=1e-6)
    assert fit.params.length_scale == pytest.approx(0.5, abs=1e-6)
    assert fit.residual < 1e-12


def test_fit_flat_variogram_errors():
    vg = Variogram(np.array([0.1, 0.2, 0.3]), np.zeros(3), np.array([5, 5, 5]))
    with pytest.raises(FitError, match="flat variogram"):
        fit_kernel(vg, "matern12")


def test_fit_needs_three_bins():
    vg = Variogram(np.array([0.1, 0.2]), np.ones(2), np.array([5, 5]))
    with pytest.raises(ValueError):
        fit_kernel(vg, "se")


def test_fit_nonconvergence_carries_best_iterate():
    # linearly growing semivariance: the optimum runs off to the largest length scale
    lags = np.linspace(0.1, 1.0, 10)
    vg = Variogram(lags, 3.0 * lags, np.ones(10, dtype=int))
    with pytest.raises(FitError) as info:
        fit_kernel(vg, "matern12")
    assert info.value.best is not None


def test_best_family_prefers_generating_family():
    lags = np.linspace(0.05, 3.0, 20)
    vg = Variogram(lags, variogram_model("matern12", lags, 3.49, 0.944), np.full(20, 10))
    best, fits = fit_best_kernel(vg)
    assert best.params.family is KernelFamily.MATERN12
    assert fits[KernelFamily.SQUARED_EXPONENTIAL].residual > best.residual


# ---------------------------------------------------------------------------
# temporal variance


def test_temporal_variance_constant_field():
    snaps = np.tile(np.arange(6.0), (10, 1))
    tv = estimate_temporal_variance(np.arange(10) * 5.0, snaps)
    assert np.all(tv.rate == 0) and np.all(tv.quotient == 0)


def test_temporal_variance_deterministic_drift():
    times = np.arange(8) * 5.0
    snaps = np.arange(8)[:, None] + np.zeros((1, 4))
    tv = estimate_temporal_variance(times, snaps)
    np.testing.assert_allclose(tv.rate, 0, atol=1e-15)


def test_temporal_variance_wiener_rate():
    rng = np.random.default_rng(3)
    dt, n, g, rate = 5.0, 100, 400, 0.04
    inc = rng.normal(scale=np.sqrt(rate * dt), size=(n - 1, g))
    snaps = np.vstack([np.zeros(g), np.cumsum(inc, axis=0)])
    tv = estimate_temporal_variance(np.arange(n) * dt, snaps)
    assert np.mean(tv.rate) == pytest.approx(rate, rel=0.2)
    # the literal quotient form is the rate divided by dt
    np.testing.assert_allclose(tv.quotient, tv.rate / dt, rtol=1e-12)


def test_temporal_variance_needs_two_increments():
    with pytest.raises(ValueError, match="at least 2 increments"):
        estimate_temporal_variance([0.0, 5.0], np.zeros((2, 3)))
