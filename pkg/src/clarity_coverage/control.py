"""Coverage controllers driven by the clarity map.

Positions are in km, inputs in m/s. Both controllers return inputs of norm
exactly ``u_max`` or exactly zero.

``direct``: steer along the Sobolev-weighted gradient of the clarity-deficit
cost with respect to robot position, falling back to the worst-covered grid
point when that gradient vanishes.

``indirect``: spectral multiscale coverage of a target density built from
the per-point time needed to reach the target clarity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clarity import (
    ClarityDynParams,
    ClarityMap,
    UnreachableTarget,
    sensing_S_from_distance,
    sensing_S_grad,
    time_to_clarity,
)
from .kernels import KernelParams
from .spectral import CosineBasis, SpectralCoeffs, truncate

DIRECT = "direct"
INDIRECT = "indirect"
POLICIES = (DIRECT, INDIRECT)


@dataclass(frozen=True)
class RobotModel:
    """Single integrator x' = u with |u| <= u_max (m/s)."""

    u_max: float = 30.0

    def __post_init__(self):
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")

    def G(self, x=None) -> np.ndarray:
        return np.eye(2)


@dataclass
class ControlSettings:
    policy: str = INDIRECT
    modes: int = 16
    tau_max: float = 3600.0
    eps_scale: float = 1e-9
    smoothing: float | None = None  # Matern-1/2 distance smoothing in km; default spacing / 10
    n_keep: int | None = None  # DCT coefficients shared with agents; None shares all

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown controller {self.policy!r}; expected one of {POLICIES}")


# ---------------------------------------------------------------------------
# Direct method


def direct_weight_field(clarity: ClarityMap, basis: CosineBasis) -> np.ndarray:
    """Quadrature weights h(p) with L(x) = sum_p h(p) dS/dx(x, p).

    h(p) = cell_area * (1 - q(p))^2 * sum_l Lambda_l (qbar_l - q_l) b_l(p).
    """
    diff = basis.transform(clarity.q_target).values - basis.transform(clarity.q).values
    g = basis.inverse(basis.weights * diff)
    return basis.grid.cell_area * (1.0 - clarity.q) ** 2 * g


def direct_L(x, clarity: ClarityMap, params: KernelParams, dt: float, basis: CosineBasis,
             smoothing: float | None = None, weight_field=None) -> np.ndarray:
    """Row vector L(t, x) multiplying the robot velocity in the second-order cost change."""
    h = direct_weight_field(clarity, basis) if weight_field is None else weight_field
    delta = _smoothing(params, basis, smoothing)
    dS = sensing_S_grad(params, x, basis.grid.points, dt, delta)
    return h @ dS


def _smoothing(params, basis, smoothing):
    if params.family.value != "matern12":
        return 0.0
    return basis.grid.spacing / 10.0 if smoothing is None else smoothing


def pi_direct(x, L, clarity: ClarityMap, model: RobotModel, eps: float) -> tuple[np.ndarray, bool]:
    """u = u_max G^T L^T / |L G|; when |L G| <= eps head for the largest deficit instead.

    Returns (u, fallback_used).
    """
    LG = np.asarray(L, float) @ model.G(x)
    n = np.linalg.norm(LG)
    if n > eps:
        return model.u_max * LG / n, False
    deficit = clarity.deficit
    if not np.any(deficit > 0):
        return np.zeros(2), True
    target = clarity.grid.points[int(np.argmax(deficit))]
    v = target - np.asarray(x, float)
    dist = np.linalg.norm(v)
    if dist == 0:
        return np.zeros(2), True
    return model.u_max * v / dist, True


# ---------------------------------------------------------------------------
# Indirect method


def compute_tsd(clarity: ClarityMap, params: KernelParams, dt: float, sigma_t_sq, tau_max: float,
                normalize: bool = True) -> np.ndarray:
    """Target spatial distribution from the time-to-target-clarity at every grid point.

    The sensing rate is S(p, p) (robot directly over the point). Targets at or
    above the equilibrium clarity get ``tau_max``. Normalized to integrate to 1
    over the grid unless identically zero.
    """
    g = clarity.grid.size
    W = np.broadcast_to(np.asarray(sigma_t_sq, dtype=float), (g,))
    S0 = float(sensing_S_from_distance(params, 0.0, dt))
    tau = np.zeros(g)
    for i in np.nonzero(clarity.q < clarity.q_target)[0]:
        dyn = ClarityDynParams(S0, float(W[i]), float(clarity.q[i]))
        try:
            tau[i] = min(time_to_clarity(dyn, float(clarity.q_target[i])), tau_max)
        except UnreachableTarget:
            tau[i] = tau_max
    if not normalize:
        return tau
    total = tau.sum() * clarity.grid.cell_area
    return tau / total if total > 0 else tau


@dataclass
class TrajectoryAccumulator:
    """Running basis coefficients of the fleet's visited positions."""

    shape: tuple[int, int]
    sums: np.ndarray = None
    agent_time: float = 0.0
    elapsed: float = 0.0

    def __post_init__(self):
        if self.sums is None:
            self.sums = np.zeros(self.shape)

    def add(self, basis: CosineBasis, positions, dt: float):
        P = np.atleast_2d(positions)
        self.sums = self.sums + basis.eval_at(P).sum(axis=0) * dt
        self.agent_time += dt * P.shape[0]
        self.elapsed += dt

    @property
    def coeffs(self) -> np.ndarray:
        if self.agent_time == 0:
            return np.zeros(self.shape)
        return self.sums / self.agent_time


def pi_indirect(x, phi_hat, acc: TrajectoryAccumulator, basis: CosineBasis, model: RobotModel,
                eps: float) -> np.ndarray:
    """Spectral multiscale coverage input for one agent.

    s_l = T (c_l - phi_l), B = sum_l Lambda_l s_l grad b_l(x), u = -u_max B / |B|.
    """
    phi = phi_hat.values if isinstance(phi_hat, SpectralCoeffs) else np.asarray(phi_hat)
    if not np.any(phi):
        return np.zeros(2)
    s = acc.elapsed * (acc.coeffs - phi)
    grad = basis.grad_at(x)[0]  # (K1+1, K2+1, 2)
    B = np.einsum("ij,ijk->k", basis.weights * s, grad)
    n = np.linalg.norm(B)
    if n <= eps:
        return np.zeros(2)
    return -model.u_max * B / n


def ergodicity(acc: TrajectoryAccumulator, phi_hat, basis: CosineBasis) -> float:
    phi = phi_hat.values if isinstance(phi_hat, SpectralCoeffs) else np.asarray(phi_hat)
    diff = acc.coeffs - phi
    return float(np.sum(basis.weights * diff * diff))


# ---------------------------------------------------------------------------
# Fleet dispatch


@dataclass
class ControllerState:
    clarity: ClarityMap
    accumulator: TrajectoryAccumulator
    t: float = 0.0


@dataclass
class FleetController:
    """Evaluates one policy for every agent against a shared clarity map.

    ``sigma_t_sq`` is the per-grid-point Wiener rate used by the indirect
    target distribution.
    """

    basis: CosineBasis
    params: KernelParams
    dt: float
    sigma_t_sq: np.ndarray
    model: RobotModel
    settings: ControlSettings = field(default_factory=ControlSettings)

    @property
    def eps(self) -> float:
        return self.settings.eps_scale * self.model.u_max * self.params.variance

    def new_state(self, clarity: ClarityMap) -> ControllerState:
        return ControllerState(clarity, TrajectoryAccumulator(self.basis.shape), clarity.t)

    def shared_clarity(self, clarity: ClarityMap) -> ClarityMap:
        """Clarity as seen by the agents, rebuilt from a truncated DCT when ``n_keep`` is set."""
        if self.settings.n_keep is None:
            return clarity
        coeffs = truncate(self.basis.transform(clarity.q), self.settings.n_keep, self.basis.weights)
        q = np.clip(self.basis.inverse(coeffs), 0.0, 1.0)
        return ClarityMap(clarity.grid, q, clarity.q_target, clarity.t)

    def step(self, positions, state: ControllerState, policy: str | None = None):
        """Inputs for every agent; returns (u (N, 2), fallback flags (N,))."""
        policy = policy or self.settings.policy
        P = np.atleast_2d(np.asarray(positions, dtype=float))
        clarity = self.shared_clarity(state.clarity)
        U = np.zeros_like(P)
        flags = np.zeros(P.shape[0], dtype=bool)
        if P.shape[0] == 0:
            return U, flags
        if policy == DIRECT:
            h = direct_weight_field(clarity, self.basis)
            for i, x in enumerate(P):
                L = direct_L(x, clarity, self.params, self.dt, self.basis, self.settings.smoothing, weight_field=h)
                U[i], flags[i] = pi_direct(x, L, clarity, self.model, self.eps)
        elif policy == INDIRECT:
            tsd = compute_tsd(clarity, self.params, self.dt, self.sigma_t_sq, self.settings.tau_max)
            phi_hat = self.basis.transform(tsd)
            for i, x in enumerate(P):
                U[i] = pi_indirect(x, phi_hat, state.accumulator, self.basis, self.model, self.eps)
        else:
            raise ValueError(f"unknown controller {policy!r}")
        return U, flags


def fleet_step(t, positions, state: ControllerState, which: str, controller: FleetController):
    """u_i = pi(t, x_i) for every agent, sharing one clarity map and trajectory history."""
    state.t = t
    return controller.step(positions, state, which)
