"""Grid-state Kalman filter for a spatiotemporal GP whose field drifts as a Wiener process.

The state is the field at the grid points. Covariances are carried as an
upper-triangular factor ``U`` with ``Sigma = U.T @ U`` and updated with QR
array algorithms, so the covariance stays positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from .grid import GridSpec
from .kernels import KernelParams, kernel_eval, kernel_matrix

JITTER = 1e-9


class FilterError(RuntimeError):
    pass


@dataclass(frozen=True)
class FilterState:
    t: float
    mean: np.ndarray
    cov_sqrt: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.cov_sqrt.T @ self.cov_sqrt

    @property
    def variance(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.cov_sqrt, self.cov_sqrt)


@dataclass(frozen=True)
class MeasurementBatch:
    t: float
    positions: np.ndarray
    values: np.ndarray
    noise_var: float | np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if pos.shape[0] != vals.shape[0] or pos.shape[0] < 1:
            raise ValueError("measurement batch needs r >= 1 positions matching values")
        R = np.broadcast_to(np.asarray(self.noise_var, dtype=float), vals.shape)
        if np.any(R <= 0):
            raise ValueError("measurement noise variance must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "noise_var", np.array(R))

    def __len__(self):
        return len(self.values)


def _triu_qr(A: np.ndarray) -> np.ndarray:
    R = linalg.qr(A, mode="r", overwrite_a=True, check_finite=False)[0]
    return R


def predict(state: FilterState, dt: float, sigma_t_sq) -> FilterState:
    """Prediction: mean unchanged, Sigma += diag(sigma_t_sq * dt)."""
    if not dt > 0:
        raise ValueError("prediction step needs dt > 0")
    g = state.mean.shape[0]
    q = np.broadcast_to(np.asarray(sigma_t_sq, dtype=float), (g,))
    if np.any(q < 0):
        raise ValueError("temporal variance rate must be non-negative")
    if not np.any(q > 0):
        return FilterState(state.t + dt, state.mean, state.cov_sqrt)
    U = _triu_qr(np.vstack([state.cov_sqrt, np.diag(np.sqrt(q * dt))]))[:g]
    return FilterState(state.t + dt, state.mean, U)


class NGPKF:
    """Filter bound to one grid and one kernel; caches the Cholesky factor of K_gg."""

    def __init__(self, grid: GridSpec, params: KernelParams, jitter: float = JITTER):
        self.grid = grid
        self.params = params
        self.eps = jitter * params.variance
        self.points = grid.points
        K = kernel_matrix(params, self.points)
        K[np.diag_indices_from(K)] += self.eps
        try:
            self._chol = linalg.cho_factor(K, lower=False, check_finite=False)
        except linalg.LinAlgError as exc:
            raise FilterError("kernel matrix on the grid is not positive definite") from exc
        self.K_gg = K

    def prior(self, m0: Callable | float | np.ndarray = 0.0, t0: float = 0.0) -> FilterState:
        if callable(m0):
            mean = np.asarray(m0(self.points), dtype=float).reshape(-1)
        else:
            mean = np.broadcast_to(np.asarray(m0, dtype=float), (self.grid.size,)).copy()
        U = np.triu(self._chol[0])
        return FilterState(float(t0), mean, U)

    def predict(self, state: FilterState, dt: float, sigma_t_sq) -> FilterState:
        return predict(state, dt, sigma_t_sq)

    def measurement_model(self, positions) -> tuple[np.ndarray, np.ndarray]:
        """Return (C, K_rr - C K_gr) for measurement positions; C = K(P_r, P_g) K_gg^-1."""
        P = np.atleast_2d(np.asarray(positions, dtype=float))
        K_gr = kernel_matrix(self.params, self.points, P)
        C = linalg.cho_solve(self._chol, K_gr, check_finite=False).T
        K_rr = kernel_matrix(self.params, P)
        V0 = K_rr - C @ K_gr
        return C, 0.5 * (V0 + V0.T)

    def correct(self, state: FilterState, batch: MeasurementBatch, square_root: bool = True) -> FilterState:
        if not np.isclose(batch.t, state.t, rtol=0, atol=1e-9):
            raise FilterError(f"measurement time {batch.t} does not match state time {state.t}; predict first")
        if not np.all(self.grid.contains(batch.positions)):
            raise FilterError("measurement position outside the filter domain")
        C, V0 = self.measurement_model(batch.positions)
        V = V0 + np.diag(batch.noise_var)
        innov = batch.values - C @ state.mean
        if not square_root:
            return self._correct_dense(state, C, V, innov)
        r, g = C.shape
        try:
            Vc = linalg.cholesky(V, lower=False, check_finite=False)
        except linalg.LinAlgError as exc:
            raise FilterError("degenerate innovation covariance") from exc
        pre = np.zeros((r + g, r + g))
        pre[:r, :r] = Vc
        pre[r:, :r] = state.cov_sqrt @ C.T
        pre[r:, r:] = state.cov_sqrt
        post = _triu_qr(pre)
        Sc = post[:r, :r]
        Kbar = post[:r, r:]
        if np.any(np.abs(np.diag(Sc)) == 0):
            raise FilterError("degenerate innovation covariance")
        # gain L = Kbar^T Sc^-T ; L @ innov = Kbar^T (Sc^-T innov)
        z = linalg.solve_triangular(Sc, innov, trans="T", lower=False, check_finite=False)
        mean = state.mean + Kbar.T @ z
        U = post[r:, r:]
        # QR leaves row signs arbitrary; fix a positive diagonal
        U = U * np.sign(np.where(np.diag(U) == 0, 1.0, np.diag(U)))[:, None]
        return FilterState(state.t, mean, U)

    def _correct_dense(self, state, C, V, innov):
        Sigma = state.cov
        S = C @ Sigma @ C.T + V
        try:
            Lk = linalg.solve(S, C @ Sigma, assume_a="pos").T
        except linalg.LinAlgError as exc:
            raise FilterError("degenerate innovation covariance") from exc
        mean = state.mean + Lk @ innov
        Sig = Sigma - Lk @ S @ Lk.T
        Sig = 0.5 * (Sig + Sig.T)
        return FilterState(state.t, mean, linalg.cholesky(Sig, lower=False))

    def posterior_at(self, state: FilterState, p) -> tuple[np.ndarray, np.ndarray]:
        """GP interpolation of the grid posterior to arbitrary points."""
        P = np.atleast_2d(np.asarray(p, dtype=float))
        k = kernel_matrix(self.params, self.points, P)
        c = linalg.cho_solve(self._chol, k, check_finite=False)
        mean = c.T @ state.mean
        Uc = state.cov_sqrt @ c
        # Var[f(p)] = Var[f(p) | f_g] + c^T Sigma c
        var = kernel_eval(self.params, 0.0) - np.einsum("ij,ij->j", k, c) + np.einsum("ij,ij->j", Uc, Uc)
        # snap exact grid hits to the stored marginals
        d = np.abs(P[:, None, :] - self.points[None, :, :]).max(axis=2)
        hit_r, hit_g = np.nonzero(d < 1e-12)
        if hit_r.size:
            mean[hit_r] = state.mean[hit_g]
            var[hit_r] = state.variance[hit_g]
        return mean, var
