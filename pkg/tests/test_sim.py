import numpy as np
import pytest

from clarity_coverage.clarity import ClarityMap
from clarity_coverage.config import ScenarioConfig
from clarity_coverage.grid import GridSpec, NodeGrid
from clarity_coverage.kernels import KernelParams, empirical_variogram, fit_kernel
from clarity_coverage.sim import (
    GroundTruth,
    generate_ground_truth,
    mean_clarity_deficit,
    measure,
    rng_stream,
    run_scenario,
    step_dynamics,
)

SMALL = ScenarioConfig(length_x=1.0, length_y=0.6, spacing=0.1, horizon=60.0, n_agents=2, components=("x",))


def test_static_truth_without_drift():
    gt = generate_ground_truth(SMALL.replace(sigma_t_sq=0.0))
    f = gt.fields["x"]
    assert np.all(f == f[0])


def test_truth_increment_variance():
    cfg = SMALL.replace(sigma_t_sq=0.02, horizon=500.0)
    gt = generate_ground_truth(cfg)
    inc = np.diff(gt.fields["x"], axis=0)
    assert np.var(inc) == pytest.approx(0.02 * cfg.dt, rel=0.05)


def test_initial_truth_has_kernel_statistics():
    # pool the initial field over many seeds and fit its variogram
    kp = KernelParams("matern12", 1.0, 0.3, 0.1)
    cfg = ScenarioConfig(length_x=1.2, length_y=1.2, spacing=0.1, horizon=0.0, components=("x",), kernel=kp, truth_refine=1)
    fields, pts = [], None
    for seed in range(40):
        gt = generate_ground_truth(cfg, seed=seed)
        fields.append(gt.fields["x"][0])
        pts = gt.grid.points
    vg = empirical_variogram([pts] * 40, fields, n_bins=10, max_lag=0.6)
    fit = fit_kernel(vg, "matern12")
    assert fit.params.sigma == pytest.approx(1.0, rel=0.2)
    assert fit.params.length_scale == pytest.approx(0.3, rel=0.3)


def test_rng_streams_independent():
    a = rng_stream(3, "truth").standard_normal(5)
    b = rng_stream(3, "noise").standard_normal(5)
    c = rng_stream(3, "truth").standard_normal(5)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, c)


def _linear_truth():
    nodes = NodeGrid(5, 4, 0.25)
    vals = 2.0 + 3.0 * nodes.points[:, 0] - nodes.points[:, 1]
    return GroundTruth(nodes, np.array([0.0]), {"x": vals[None, :]})


def test_measure_noiseless_at_node():
    gt = _linear_truth()
    b = measure(gt, "x", 0.0, gt.grid.points[[3, 7]], 0.0, np.random.default_rng(0))
    np.testing.assert_allclose(b.values, gt.fields["x"][0][[3, 7]], atol=1e-14)


def test_bilinear_exact_for_linear_field():
    gt = _linear_truth()
    p = np.array([[0.31, 0.12], [0.9, 0.7]])
    np.testing.assert_allclose(gt.interpolate("x", 0.0, p), 2.0 + 3.0 * p[:, 0] - p[:, 1], atol=1e-12)


def test_measurement_noise_variance():
    gt = _linear_truth()
    p = np.tile([[0.4, 0.4]], (20000, 1))
    b = measure(gt, "x", 0.0, p, 0.25, np.random.default_rng(1))
    assert np.var(b.values) == pytest.approx(0.25, rel=0.05)


def test_step_dynamics():
    grid = GridSpec.for_domain(3.0, 1.5, 0.1)
    x = np.array([[1.0, 0.5]])
    np.testing.assert_allclose(step_dynamics(x, [[30.0, 0.0]], 5.0, grid), [[1.15, 0.5]])
    np.testing.assert_array_equal(step_dynamics(x, [[0.0, 0.0]], 5.0, grid), x)
    edge = step_dynamics([[2.99, 1.49]], [[30.0, 30.0]], 5.0, grid, margin=0.05)
    np.testing.assert_allclose(edge, [[2.95, 1.45]])


def test_deficit_examples():
    grid = GridSpec(2, 2, 1.0)
    assert mean_clarity_deficit(ClarityMap(grid, np.full(4, 0.9), 0.8)) == 0.0
    assert mean_clarity_deficit(ClarityMap(grid, np.zeros(4), 0.8)) == pytest.approx(0.8)
    assert mean_clarity_deficit(ClarityMap(grid, [0.9, 0.9, 0.0, 0.8], 0.8)) == pytest.approx(0.2)


def test_zero_horizon_run():
    res = run_scenario(SMALL.replace(horizon=0.0))
    assert res.metrics.t == [0.0]
    assert res.trajectories == []


@pytest.mark.parametrize("policy", ["direct", "indirect"])
def test_run_deterministic(policy):
    cfg = SMALL.replace(policy=policy, seed=11)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.metrics.deficit == b.metrics.deficit
    assert a.metrics.rmse == b.metrics.rmse
    assert a.trajectories == b.trajectories


@pytest.mark.parametrize("policy", ["direct", "indirect"])
def test_agents_stay_in_domain(policy):
    res = run_scenario(SMALL.replace(policy=policy, n_agents=3, horizon=200.0))
    P = res.positions
    assert np.all(P >= 0) and np.all(P[..., 0] <= 1.0) and np.all(P[..., 1] <= 0.6)


def test_clarity_never_drops_without_drift():
    res = run_scenario(SMALL.replace(sigma_t_sq=0.0, horizon=100.0))
    d = np.array(res.metrics.deficit)
    assert np.all(np.diff(d) <= 1e-12)
    assert d[-1] < d[0]


def test_rmse_below_prior_spread():
    res = run_scenario(SMALL.replace(horizon=200.0))
    assert res.metrics.rmse["x"][-1] < np.sqrt(SMALL.kernel.variance)


def test_no_measurement_run_decays():
    res = run_scenario(SMALL, measure_enabled=False)
    d = np.array(res.metrics.deficit)
    assert np.all(np.diff(d) >= 0)
    assert res.measurements == []
