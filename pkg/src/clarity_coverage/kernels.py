"""Stationary isotropic spatial kernels and geostatistical hyperparameter estimation.

Distances are in km, field values in field units (e.g. m/s).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize
from scipy.spatial.distance import cdist, pdist


class KernelFamily(str, enum.Enum):
    MATERN12 = "matern12"
    SQUARED_EXPONENTIAL = "se"

    @classmethod
    def parse(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "matern12": cls.MATERN12,
            "matern": cls.MATERN12,
            "exponential": cls.MATERN12,
            "se": cls.SQUARED_EXPONENTIAL,
            "squaredexponential": cls.SQUARED_EXPONENTIAL,
            "rbf": cls.SQUARED_EXPONENTIAL,
        }
        if key not in aliases:
            raise ValueError(f"unknown kernel family {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class KernelParams:
    family: KernelFamily
    sigma: float
    length_scale: float
    noise_var: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.noise_var >= 0:
            raise ValueError("noise_var must be non-negative")

    @property
    def variance(self) -> float:
        return self.sigma**2

    def with_noise(self, noise_var: float) -> "KernelParams":
        return replace(self, noise_var=noise_var)


def kernel_eval(params: KernelParams, d):
    """Covariance at distance ``d`` (scalar or array)."""
    d = np.asarray(d, dtype=float)
    if params.family is KernelFamily.MATERN12:
        val = params.variance * np.exp(-d / params.length_scale)
    else:
        val = params.variance * np.exp(-0.5 * (d / params.length_scale) ** 2)
    return val if val.ndim else float(val)


def kernel_dk_dd(params: KernelParams, d):
    """Derivative of the kernel with respect to distance."""
    d = np.asarray(d, dtype=float)
    k = kernel_eval(params, d)
    if params.family is KernelFamily.MATERN12:
        return -k / params.length_scale
    return -k * d / params.length_scale**2


def kernel_matrix(params: KernelParams, A, B=None) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    return kernel_eval(params, cdist(A, B))


def correlation(family, h, length_scale):
    """k(h)/k(0) for the given family."""
    return kernel_eval(KernelParams(family, 1.0, length_scale), h)


# ---------------------------------------------------------------------------
# Variogram estimation and fitting


@dataclass(frozen=True)
class Variogram:
    lags: np.ndarray
    semivariance: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.lags) <= 0):
            raise ValueError("variogram lags must be strictly increasing")
        if np.any(self.semivariance < 0) or np.any(self.counts <= 0):
            raise ValueError("invalid variogram bins")

    def __len__(self):
        return len(self.lags)


class FitError(RuntimeError):
    """Raised when a kernel fit fails; ``best`` holds the best iterate found, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def _accumulate_pairs(positions, values, edges):
    d = pdist(positions)
    sq = pdist(values[:, None], metric="sqeuclidean")
    idx = np.searchsorted(edges, d, side="right") - 1
    # the last edge is inclusive
    idx[d == edges[-1]] = len(edges) - 2
    ok = (idx >= 0) & (idx < len(edges) - 1) & (d > 0)
    n_bins = len(edges) - 1
    sums = np.bincount(idx[ok], weights=sq[ok], minlength=n_bins)
    counts = np.bincount(idx[ok], minlength=n_bins)
    lag_sums = np.bincount(idx[ok], weights=d[ok], minlength=n_bins)
    return sums, counts, lag_sums


def empirical_variogram(positions, values, n_bins: int = 20, max_lag: float | None = None) -> Variogram:
    """Matheron estimator with equal-width lag bins on (0, max_lag].

    ``positions`` is (n, 2) and ``values`` is (n,), or a list of such pairs
    (one per snapshot) whose pairs are pooled without crossing snapshots.
    Each bin reports the mean pair distance as its lag. Empty bins are dropped.
    """
    groups = _as_groups(positions, values)
    if sum(len(v) for _, v in groups) < 2 or all(len(v) < 2 for _, v in groups):
        raise ValueError("empirical_variogram needs at least 2 samples")
    if max_lag is None:
        pts = np.vstack([p for p, _ in groups])
        diag = np.hypot(*(pts.max(axis=0) - pts.min(axis=0)))
        max_lag = 0.5 * diag
    if not max_lag > 0:
        raise ValueError("max_lag must be positive")
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=np.int64)
    lag_sums = np.zeros(n_bins)
    for p, v in groups:
        if len(v) < 2:
            continue
        s, c, l = _accumulate_pairs(p, v, edges)
        sums += s
        counts += c
        lag_sums += l
    keep = counts > 0
    return Variogram(
        lags=lag_sums[keep] / counts[keep],
        semivariance=sums[keep] / (2.0 * counts[keep]),
        counts=counts[keep],
    )


def _as_groups(positions, values):
    if isinstance(positions, (list, tuple)) and positions and np.ndim(positions[0]) == 2:
        return [(np.asarray(p, float), np.asarray(v, float).ravel()) for p, v in zip(positions, values)]
    return [(np.atleast_2d(np.asarray(positions, float)), np.asarray(values, float).ravel())]


def variogram_model(family, h, sigma, length_scale):
    """Semivariance sigma^2 (1 - k(h)/k(0)) without nugget."""
    return sigma**2 * (1.0 - correlation(family, np.asarray(h, float), length_scale))


@dataclass(frozen=True)
class KernelFit:
    params: KernelParams
    residual: float


def fit_kernel(vg: Variogram, family, noise_var: float = 0.0, n_grid: int = 200) -> KernelFit:
    """Weighted least-squares fit of (sigma, L) to a variogram.

    Weights are the pair counts. For fixed L the model is linear in sigma^2, so
    sigma^2 is profiled out in closed form and only log L is searched: a coarse
    log-spaced scan brackets the minimum, then a bounded scalar search refines it.
    """
    family = KernelFamily.parse(family)
    if len(vg) < 3:
        raise ValueError("fit_kernel needs at least 3 variogram bins")
    h = vg.lags
    g = vg.semivariance
    w = vg.counts.astype(float)
    if np.all(g <= 0):
        raise FitError("flat variogram: semivariance is zero in every bin")

    def profile(log_l):
        basis = 1.0 - correlation(family, h, np.exp(log_l))
        denom = np.sum(w * basis**2)
        s2 = max(np.sum(w * g * basis) / denom, 0.0) if denom > 0 else 0.0
        return s2, np.sum(w * (g - s2 * basis) ** 2)

    lo, hi = np.log(h.min() * 1e-3), np.log(h.max() * 1e3)
    scan = np.linspace(lo, hi, n_grid)
    costs = np.array([profile(x)[1] for x in scan])
    i = int(np.argmin(costs))
    a, b = scan[max(i - 1, 0)], scan[min(i + 1, n_grid - 1)]
    res = optimize.minimize_scalar(lambda x: profile(x)[1], bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-13, "maxiter": 500})
    log_l = res.x if res.fun <= costs[i] else scan[i]
    s2, cost = profile(log_l)
    best = None
    if s2 > 0:
        best = KernelFit(KernelParams(family, np.sqrt(s2), float(np.exp(log_l)), noise_var), float(cost))
    if s2 <= 0:
        raise FitError("flat variogram: fitted sigma collapsed to zero", best)
    if i in (0, n_grid - 1) or not res.success:
        raise FitError("kernel fit did not converge inside the length-scale bounds", best)
    return best


def fit_best_kernel(vg: Variogram, noise_var: float = 0.0) -> tuple[KernelFit, dict]:
    """Fit every family and return the one with the lowest residual, plus all fits."""
    fits = {}
    for fam in KernelFamily:
        try:
            fits[fam] = fit_kernel(vg, fam, noise_var)
        except FitError:
            continue
    if not fits:
        raise FitError("no kernel family could be fit")
    best = min(fits.values(), key=lambda f: f.residual)
    return best, fits


# ---------------------------------------------------------------------------
# Temporal variance


@dataclass(frozen=True)
class TemporalVariance:
    rate: np.ndarray
    quotient: np.ndarray


def estimate_temporal_variance(times, snapshots) -> TemporalVariance:
    """Per-point temporal variability from time-indexed grid fields.

    ``snapshots`` has shape (n_times, n_points). ``rate`` is the Wiener
    variance rate, the sample variance of increments scaled by 1/sqrt(dt),
    so that Var[f(t+dt) - f(t)] = rate * dt. ``quotient`` is the sample
    variance of the difference quotients (f(t2) - f(t1)) / (t2 - t1).
    """
    times = np.asarray(times, dtype=float)
    snaps = np.asarray(snapshots, dtype=float)
    if snaps.ndim != 2 or snaps.shape[0] != times.shape[0]:
        raise ValueError("snapshots must be (n_times, n_points) matching times")
    if snaps.shape[0] < 3:
        raise ValueError(
            f"temporal variance needs at least 2 increments (3 snapshots); got {snaps.shape[0]} snapshot(s)"
        )
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    inc = np.diff(snaps, axis=0)
    rate = np.var(inc / np.sqrt(dt)[:, None], axis=0, ddof=1)
    quotient = np.var(inc / dt[:, None], axis=0, ddof=1)
    return TemporalVariance(rate=rate, quotient=quotient)
