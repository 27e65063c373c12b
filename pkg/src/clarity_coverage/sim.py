"""Ground truth synthesis, fleet kinematics and the closed-loop scenario runner."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .clarity import ClarityMap, clarity_map_from_filter, combine_min
from .config import ScenarioConfig
from .control import ControlSettings, FleetController, RobotModel, TrajectoryAccumulator, fleet_step
from .grid import GridSpec, NodeGrid
from .io import DataError, read_grid_csv, write_csv
from .kernels import kernel_matrix
from .ngpkf import NGPKF, FilterState, MeasurementBatch
from .spectral import CosineBasis

log = logging.getLogger(__name__)

KM_PER_M = 1e-3
_STREAMS = {"truth": 1, "noise": 2}


class SimulationError(RuntimeError):
    pass


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent named random stream derived from one seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name]]))


# ---------------------------------------------------------------------------
# Ground truth


@dataclass
class GroundTruth:
    grid: NodeGrid
    times: np.ndarray
    fields: dict[str, np.ndarray]  # component -> (n_times, n_nodes)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def at(self, component: str, t: float) -> np.ndarray:
        """Node values at time t, linear in time between stored snapshots."""
        f = self.fields[component]
        times = self.times
        if t <= times[0]:
            return f[0]
        if t >= times[-1]:
            return f[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        if np.isclose(times[i], t, rtol=0, atol=1e-9):
            return f[i]
        a = (t - times[i]) / (times[i + 1] - times[i])
        return (1 - a) * f[i] + a * f[i + 1]

    def interpolate(self, component: str, t: float, positions) -> np.ndarray:
        return self.grid.interpolate(self.at(component, t), positions)


def load_rates(cfg: ScenarioConfig, points: np.ndarray) -> np.ndarray:
    """Per-point Wiener variance rate: constant, or nearest entry of a ``x_km, y_km, sigma_t_sq`` CSV."""
    if not cfg.sigma_t_sq_file:
        return np.full(len(points), float(cfg.sigma_t_sq))
    data = np.genfromtxt(cfg.sigma_t_sq_file, delimiter=",", names=True)
    try:
        src = np.column_stack([data["x_km"], data["y_km"]])
        vals = np.asarray(data["sigma_t_sq"], float)
    except ValueError as exc:
        raise DataError(f"{cfg.sigma_t_sq_file}: need columns x_km, y_km, sigma_t_sq") from exc
    d = ((points[:, None, :] - src[None, :, :]) ** 2).sum(axis=2)
    return vals[np.argmin(d, axis=1)]


def generate_ground_truth(cfg: ScenarioConfig, seed: int | None = None, grid: GridSpec | None = None) -> GroundTruth:
    """GP initial field plus independent per-node Gaussian increments N(0, sigma_t^2 dt)."""
    seed = cfg.seed if seed is None else seed
    grid = grid or GridSpec.for_domain(cfg.length_x, cfg.length_y, cfg.spacing)
    nodes = NodeGrid.covering(grid, cfg.truth_refine)
    rng = rng_stream(seed, "truth")
    n = cfg.n_steps
    times = np.arange(n + 1) * cfg.dt
    rates = load_rates(cfg, nodes.points)
    fields = {}
    for comp in cfg.components:
        kp = cfg.kernel_for(comp)
        K = kernel_matrix(kp, nodes.points)
        K[np.diag_indices_from(K)] += 1e-9 * kp.variance
        try:
            Lc = linalg.cholesky(K, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise SimulationError("ground-truth kernel matrix is not positive definite") from exc
        f = np.empty((n + 1, nodes.size))
        f[0] = cfg.prior_mean + Lc @ rng.standard_normal(nodes.size)
        steps = rng.standard_normal((n, nodes.size)) * np.sqrt(rates * cfg.dt)
        f[1:] = f[0] + np.cumsum(steps, axis=0)
        fields[comp] = f
    return GroundTruth(nodes, times, fields, seed, {"source": "gp", "refine": cfg.truth_refine})


def load_ground_truth(cfg: ScenarioConfig) -> GroundTruth:
    """Replay a user-supplied regular node grid from ``t, x_km, y_km, value[, component]`` CSV."""
    fields = {}
    nodes = times = None
    for comp in cfg.components:
        snaps = read_grid_csv(cfg.truth_file, component=comp)
        xs = np.unique(snaps.points[:, 0])
        ys = np.unique(snaps.points[:, 1])
        if len(xs) * len(ys) != len(snaps.points) or len(xs) < 2 or len(ys) < 2:
            raise DataError(f"{cfg.truth_file}: points do not form a regular grid")
        h = xs[1] - xs[0]
        if not (np.allclose(np.diff(xs), h) and np.allclose(np.diff(ys), h)):
            raise DataError(f"{cfg.truth_file}: grid must have uniform, equal spacing")
        g = NodeGrid(len(xs), len(ys), float(h), (float(xs[0]), float(ys[0])))
        # reorder lexicographic (x, y) points to row-major (y outer)
        order = np.lexsort((snaps.points[:, 0], snaps.points[:, 1]))
        fields[comp] = snaps.values[:, order]
        nodes, times = g, snaps.times
    return GroundTruth(nodes, times, fields, None, {"source": str(cfg.truth_file)})


# ---------------------------------------------------------------------------
# Agents and measurements


def measure(truth: GroundTruth, component: str, t: float, positions, R: float, rng) -> MeasurementBatch:
    """Bilinear truth at each position plus N(0, R) noise."""
    P = np.atleast_2d(np.asarray(positions, dtype=float))
    vals = truth.interpolate(component, t, P)
    if R > 0:
        vals = vals + rng.standard_normal(len(vals)) * np.sqrt(R)
    # the filter needs R > 0; a noiseless sensor is recorded with a negligible variance
    return MeasurementBatch(t, P, vals, R if R > 0 else 1e-12)


def step_dynamics(x, u, dt: float, grid: GridSpec, margin: float = 0.0) -> np.ndarray:
    """Single integrator: positions in km, inputs in m/s.

    The result is clamped to the domain box shrunk by ``margin`` km on every side.
    """
    x = np.asarray(x, dtype=float) + np.asarray(u, dtype=float) * dt * KM_PER_M
    lo, hi = grid.bounds
    return np.clip(x, lo + margin, hi - margin)


def mean_clarity_deficit(clarity: ClarityMap) -> float:
    return float(np.mean(np.maximum(0.0, clarity.q_target - clarity.q)))


def mean_heading_change(positions, min_step: float = 1e-9) -> float:
    """Mean absolute change of travel direction between consecutive steps, in radians.

    ``positions`` has shape (n_steps, n_agents, 2). Steps shorter than
    ``min_step`` km (holding, or pinned at the boundary) carry no heading and
    are skipped together with the turn on either side.
    """
    P = np.asarray(positions, dtype=float)
    if P.shape[0] < 3:
        return 0.0
    v = np.diff(P, axis=0)
    moving = np.linalg.norm(v, axis=-1) > min_step
    ang = np.arctan2(v[..., 1], v[..., 0])
    turn = np.abs((np.diff(ang, axis=0) + np.pi) % (2 * np.pi) - np.pi)
    ok = moving[1:] & moving[:-1]
    return float(turn[ok].mean()) if np.any(ok) else 0.0


# ---------------------------------------------------------------------------
# Scenario runner


@dataclass
class MetricsLog:
    components: tuple[str, ...]
    t: list = field(default_factory=list)
    deficit: list = field(default_factory=list)
    rmse: dict = field(default_factory=dict)
    distance: np.ndarray | None = None

    def append(self, t, deficit, rmse: dict):
        self.t.append(float(t))
        self.deficit.append(float(deficit))
        for c in self.components:
            self.rmse.setdefault(c, []).append(float(rmse[c]))

    def rows(self):
        for i, t in enumerate(self.t):
            yield [t, self.deficit[i]] + [self.rmse[c][i] for c in self.components]

    @property
    def header(self):
        return ["t", "mean_clarity_deficit"] + [f"rmse_{c}" for c in self.components]


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: MetricsLog
    trajectories: list  # rows (t, agent, x, y, ux, uy)
    controls: list  # rows (t, agent, ux, uy, policy, fallback)
    measurements: list  # rows (t, agent, x, y, component, value)
    snapshots: list  # (step, ClarityMap, {component: FilterState})
    truth: GroundTruth
    wall_time: float = 0.0

    @property
    def positions(self) -> np.ndarray:
        """(n_steps, n_agents, 2) positions at which measurements were taken."""
        n = self.config.n_agents
        if not self.trajectories or n == 0:
            return np.zeros((0, n, 2))
        arr = np.array([[r[2], r[3]] for r in self.trajectories])
        return arr.reshape(-1, n, 2)


def build_controller(cfg: ScenarioConfig, grid: GridSpec, rates: np.ndarray) -> FleetController:
    basis = CosineBasis(grid, cfg.modes, cfg.modes)
    settings = ControlSettings(cfg.policy, cfg.modes, cfg.tau_max, cfg.eps_scale, cfg.smoothing, cfg.n_keep)
    return FleetController(basis, cfg.kernel_for(cfg.components[0]), cfg.dt, rates,
                           RobotModel(cfg.u_max), settings)


def run_scenario(cfg: ScenarioConfig, out_dir=None, measure_enabled: bool = True) -> RunResult:
    """Closed loop per step: measure -> predict/correct -> clarity -> control -> move -> log."""
    t0 = time.perf_counter()
    grid = GridSpec.for_domain(cfg.length_x, cfg.length_y, cfg.spacing)
    truth = load_ground_truth(cfg) if cfg.truth == "csv" else generate_ground_truth(cfg, grid=grid)
    noise_rng = rng_stream(cfg.seed, "noise")
    rates = load_rates(cfg, grid.points)
    filters = {c: NGPKF(grid, cfg.kernel_for(c)) for c in cfg.components}
    states = {c: f.prior(cfg.prior_mean) for c, f in filters.items()}
    controller = build_controller(cfg, grid, rates)
    x = cfg.starts()
    if x.size and not np.all(grid.contains(x)):
        raise SimulationError("start positions outside the domain")

    metrics = MetricsLog(tuple(cfg.components))
    traj, ctrl_rows, meas_rows, snaps = [], [], [], []

    def observe(t):
        maps = [clarity_map_from_filter(states[c], grid, cfg.q_target) for c in cfg.components]
        cmap = combine_min(maps)
        rmse = {}
        for c in cfg.components:
            true_vals = truth.interpolate(c, t, grid.points)
            rmse[c] = float(np.sqrt(np.mean((states[c].mean - true_vals) ** 2)))
        metrics.append(t, mean_clarity_deficit(cmap), rmse)
        return cmap

    cmap = observe(0.0)
    snaps.append((0, cmap, dict(states)))
    cstate = controller.new_state(cmap)
    distance = np.zeros(cfg.n_agents)
    n = cfg.n_steps
    for k in range(1, n + 1):
        t = k * cfg.dt
        use_meas = measure_enabled and cfg.n_agents > 0
        for c in cfg.components:
            st = filters[c].predict(states[c], cfg.dt, rates)
            if use_meas:
                R = cfg.kernel_for(c).noise_var
                batch = measure(truth, c, t, x, R, noise_rng)
                st = filters[c].correct(st, batch)
                for i, (p, v) in enumerate(zip(batch.positions, batch.values)):
                    meas_rows.append((t, i, p[0], p[1], c, v))
            states[c] = st
        cmap = observe(t)
        if k % max(cfg.snapshot_every, 1) == 0 or k == n:
            snaps.append((k, cmap, dict(states)))
        if cfg.n_agents == 0:
            continue
        cstate.clarity = cmap
        if cfg.policy == "indirect":
            cstate.accumulator.add(controller.basis, x, cfg.dt)
        u, flags = fleet_step(t, x, cstate, cfg.policy, controller)
        for i in range(cfg.n_agents):
            traj.append((t, i, x[i, 0], x[i, 1], u[i, 0], u[i, 1]))
            ctrl_rows.append((t, i, u[i, 0], u[i, 1], cfg.policy, bool(flags[i])))
        # cosine-basis gradients have no normal component on the boundary itself
        x_new = step_dynamics(x, u, cfg.dt, grid, margin=0.5 * grid.spacing)
        distance += np.linalg.norm(x_new - x, axis=1)
        x = x_new
    metrics.distance = distance
    result = RunResult(cfg, metrics, traj, ctrl_rows, meas_rows, snaps, truth, time.perf_counter() - t0)
    if out_dir is not None:
        write_outputs(result, out_dir, grid)
    return result


def write_outputs(result: RunResult, out_dir, grid: GridSpec) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    write_csv(out / "metrics.csv", result.metrics.header, result.metrics.rows())
    write_csv(out / "trajectories.csv", ["t", "agent_id", "x_km", "y_km", "ux", "uy"], result.trajectories)
    write_csv(out / "controls.csv", ["t", "agent_id", "ux", "uy", "policy", "fallback_flag"], result.controls)
    write_csv(out / "measurements.csv", ["t", "agent_id", "x_km", "y_km", "component", "value"],
              result.measurements)
    pts = grid.points
    basis = CosineBasis(grid, cfg.modes, cfg.modes)
    for step, cmap, states in result.snapshots:
        t = cmap.t
        write_csv(out / f"clarity_{step:04d}.csv", ["t", "x_km", "y_km", "q", "q_target"],
                  ((t, p[0], p[1], q, qt) for p, q, qt in zip(pts, cmap.q, cmap.q_target)))
        write_csv(out / f"spectrum_{step:04d}.csv", ["l1", "l2", "value", "lambda"],
                  basis.transform(cmap.q).to_rows(basis.weights))
        for c, st in states.items():
            write_csv(out / f"estimate_{c}_{step:04d}.csv", ["t", "x_km", "y_km", "mean", "variance"],
                      ((t, p[0], p[1], m, v) for p, m, v in zip(pts, st.mean, st.variance)))
        truth = result.truth
        vals = [truth.at(c, t) for c in cfg.components]
        write_csv(out / f"truth_{step:04d}.csv", ["t", "x_km", "y_km"] + list(cfg.components),
                  ([t, p[0], p[1]] + [v[j] for v in vals] for j, p in enumerate(truth.grid.points)))
