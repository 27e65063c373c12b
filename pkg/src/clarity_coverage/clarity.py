"""Clarity of scalar Gaussian estimates and its Riccati-type dynamics.

Clarity ``q = 1 / (1 + var)`` lives in [0, 1]. Under sensing rate ``S`` and
process intensity ``W`` it obeys ``dq/dt = S (1 - q)^2 - W q^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec
from .kernels import KernelParams, kernel_dk_dd, kernel_eval


class UnreachableTarget(ValueError):
    """The requested clarity is at or above the equilibrium clarity."""


def clarity_from_variance(var):
    return 1.0 / (1.0 + np.asarray(var, dtype=float))


def variance_from_clarity(q):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        return (1.0 - q) / q


# ---------------------------------------------------------------------------
# Sensing value


def sensing_C_V(params: KernelParams, x_r, p, dt: float | None = None):
    """Equivalent measurement gain C and noise variance V at ``p`` for a sample taken at ``x_r``.

    Broadcasts over leading dimensions of ``x_r`` and ``p``. ``dt`` is accepted
    for signature symmetry with :func:`sensing_S` and unused.
    """
    d = np.linalg.norm(np.asarray(x_r, float) - np.asarray(p, float), axis=-1)
    return _C_V_from_distance(params, d)


def _C_V_from_distance(params, d):
    k0 = params.variance
    kd = kernel_eval(params, d)
    C = kd / k0
    V = k0 - kd * kd / k0 + params.noise_var
    return C, V


def sensing_S_from_distance(params: KernelParams, d, dt: float):
    C, V = _C_V_from_distance(params, np.asarray(d, dtype=float))
    return C * C * dt / V


def sensing_S(params: KernelParams, x_r, p, dt: float):
    """Rate S = C^2 dt / V at which sampling at ``x_r`` raises clarity at ``p``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    C, V = sensing_C_V(params, x_r, p)
    return C * C * dt / V


def sensing_S_simplified(params: KernelParams, d, dt: float):
    """The closed expression k(d)^2 dt / (k(0)^2 (1 + R) - k(d)^2).

    Agrees with :func:`sensing_S` only for unit-variance kernels; kept for comparison.
    """
    kd = kernel_eval(params, np.asarray(d, float))
    k0 = params.variance
    return kd * kd * dt / (k0 * k0 * (1.0 + params.noise_var) - kd * kd)


def sensing_S_grad(params: KernelParams, x, points, dt: float, delta: float = 0.0):
    """Gradient of S(x, p) with respect to the robot position x, one row per point.

    For the Matern-1/2 kernel the distance is smoothed to sqrt(|x-p|^2 + delta^2)
    so the gradient is bounded at x = p; the result is then the exact gradient of
    S evaluated at the smoothed distance.
    """
    diff = np.asarray(x, float)[None, :] - np.atleast_2d(np.asarray(points, float))
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff) + delta * delta)
    k0 = params.variance
    kd = kernel_eval(params, d)
    V = k0 - kd * kd / k0 + params.noise_var
    # S = dt k^2 / (k0^2 V)
    dS_dk = 2.0 * dt * kd * (k0 + params.noise_var) / (k0 * k0 * V * V)
    dk_dd = kernel_dk_dd(params, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(d[:, None] > 0, diff / d[:, None], 0.0)
    return (dS_dk * dk_dd)[:, None] * unit


# ---------------------------------------------------------------------------
# Dynamics


def clarity_rate(q, S, W):
    q = np.asarray(q, dtype=float)
    return S * (1.0 - q) ** 2 - W * q * q


@dataclass(frozen=True)
class ClarityDynParams:
    S: float
    W: float
    q0: float

    def __post_init__(self):
        if self.S < 0 or self.W < 0:
            raise ValueError("S and W must be non-negative")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")

    @property
    def gamma0(self) -> float:
        return math.sqrt(self.S / self.W)

    @property
    def q_inf(self) -> float:
        """Equilibrium clarity sqrt(S/W) / (1 + sqrt(S/W)); 1 when W = 0, 0 when S = 0."""
        if self.W == 0:
            return 1.0 if self.S > 0 else self.q0
        g0 = self.gamma0
        return g0 / (1.0 + g0)


def clarity_closed_form(dyn: ClarityDynParams, t):
    """Exact solution of the clarity ODE from q(0) = q0 at time(s) t >= 0."""
    t = np.asarray(t, dtype=float)
    S, W, q0 = dyn.S, dyn.W, dyn.q0
    if S == 0 and W == 0:
        out = np.full_like(t, q0)
    elif S == 0:
        out = q0 / (1.0 + q0 * W * t)
    elif W == 0:
        out = 1.0 - (1.0 - q0) / (1.0 + S * (1.0 - q0) * t)
    else:
        g0 = dyn.gamma0
        qi = g0 / (1.0 + g0)
        g1 = qi - q0
        g2 = g1 * (g0 - 1.0)
        g3 = (g0 - 1.0) * q0 - g0
        # 2 g1 / (g2 + g3 e^{a t}) rewritten with e^{-a t} to avoid overflow
        e = np.exp(-2.0 * g0 * W * t)
        out = qi * (1.0 + 2.0 * g1 * e / (g2 * e + g3))
    return out if out.ndim else float(out)


def time_to_clarity(dyn: ClarityDynParams, q_f: float) -> float:
    """Time for clarity to rise from q0 to q_f under constant S and W."""
    S, W, q0 = dyn.S, dyn.W, dyn.q0
    if q_f < q0:
        raise ValueError(f"target clarity {q_f} is below the initial clarity {q0}")
    if q_f == q0:
        return 0.0
    if S == 0:
        raise UnreachableTarget("no sensing: clarity cannot increase")
    if W == 0:
        if q_f >= 1.0:
            raise UnreachableTarget("clarity 1 is only reached asymptotically")
        return (q_f - q0) / (S * (1.0 - q0) * (1.0 - q_f))
    g0 = dyn.gamma0
    qi = g0 / (1.0 + g0)
    if q_f >= qi:
        raise UnreachableTarget(f"target clarity {q_f} is not below the equilibrium {qi}")
    g1 = qi - q0
    g2 = g1 * (g0 - 1.0)
    g3 = (g0 - 1.0) * q0 - g0
    ratio = (2.0 * g1 * qi + g2 * (qi - q_f)) / (g3 * (q_f - qi))
    return max(math.log(ratio) / (2.0 * g0 * W), 0.0)


def integrate_clarity_rk4(q0: float, S: float, W: float, t_end: float, h: float) -> np.ndarray:
    """Classical RK4 integration of the clarity ODE; returns q at t = 0, h, 2h, ..."""
    n = int(round(t_end / h))
    out = np.empty(n + 1)
    q = q0
    out[0] = q
    for i in range(n):
        k1 = S * (1 - q) ** 2 - W * q * q
        qa = q + 0.5 * h * k1
        k2 = S * (1 - qa) ** 2 - W * qa * qa
        qb = q + 0.5 * h * k2
        k3 = S * (1 - qb) ** 2 - W * qb * qb
        qc = q + h * k3
        k4 = S * (1 - qc) ** 2 - W * qc * qc
        q = q + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        out[i + 1] = q
    return out


# ---------------------------------------------------------------------------
# Clarity maps


@dataclass(frozen=True)
class ClarityMap:
    grid: GridSpec
    q: np.ndarray
    q_target: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qt = np.broadcast_to(np.asarray(self.q_target, dtype=float), q.shape).copy()
        if q.shape != (self.grid.size,):
            raise ValueError("clarity map does not match the grid")
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("clarity must lie in [0, 1]")
        if np.any(qt < 0) or np.any(qt >= 1):
            raise ValueError("target clarity must lie in [0, 1)")
        q.setflags(write=False)
        qt.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q_target", qt)

    @property
    def deficit(self) -> np.ndarray:
        return np.maximum(0.0, self.q_target - self.q)


def clarity_map_from_filter(state, grid: GridSpec, q_target=0.8) -> ClarityMap:
    """Per-point clarity of the filter marginals."""
    q = np.clip(clarity_from_variance(state.variance), 0.0, 1.0)
    return ClarityMap(grid, q, q_target, t=state.t)


def combine_min(maps: list[ClarityMap]) -> ClarityMap:
    """Pointwise minimum clarity, i.e. the maximum deficit across field components."""
    first = maps[0]
    q = np.min(np.vstack([m.q for m in maps]), axis=0)
    return ClarityMap(first.grid, q, first.q_target, t=first.t)
