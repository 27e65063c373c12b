"""Orthonormal cosine basis on a rectangle, grid transforms and Sobolev-weighted distances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec


def _axis_norm(l, length):
    l = np.asarray(l)
    return np.where(l == 0, np.sqrt(1.0 / length), np.sqrt(2.0 / length))


def basis_eval(l, p, lengths) -> np.ndarray:
    """b_l(p) for a multi-index ``l = (l1, l2)`` at domain-relative positions ``p``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    L1, L2 = lengths
    l1, l2 = l
    v = (_axis_norm(l1, L1) * _axis_norm(l2, L2)
         * np.cos(np.pi * l1 * p[:, 0] / L1) * np.cos(np.pi * l2 * p[:, 1] / L2))
    return v


def basis_grad(l, p, lengths) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=float))
    L1, L2 = lengths
    l1, l2 = l
    a1, a2 = np.pi * l1 / L1, np.pi * l2 / L2
    n = _axis_norm(l1, L1) * _axis_norm(l2, L2)
    gx = -n * a1 * np.sin(a1 * p[:, 0]) * np.cos(a2 * p[:, 1])
    gy = -n * a2 * np.cos(a1 * p[:, 0]) * np.sin(a2 * p[:, 1])
    return np.column_stack([gx, gy])


def sobolev_weights(K1: int, K2: int, d: int = 2) -> np.ndarray:
    """Lambda_l = (1 + |l|^2)^(-(d+1)/2) over integer indices, shape (K1+1, K2+1)."""
    l1, l2 = np.meshgrid(np.arange(K1 + 1), np.arange(K2 + 1), indexing="ij")
    return (1.0 + l1**2 + l2**2) ** (-(d + 1) / 2.0)


@dataclass(frozen=True)
class SpectralCoeffs:
    values: np.ndarray  # (K1+1, K2+1)
    lengths: tuple[float, float]

    @property
    def shape(self):
        return self.values.shape

    def to_rows(self, weights=None):
        K1, K2 = self.values.shape
        lam = sobolev_weights(K1 - 1, K2 - 1) if weights is None else weights
        return [(i, j, float(self.values[i, j]), float(lam[i, j])) for i in range(K1) for j in range(K2)]


class CosineBasis:
    """Cosine basis modes 0..K per axis, tabulated at the cell centres of ``grid``.

    The transform uses the midpoint rule with cell-area weights; with one mode
    per cell along each axis it is an exact orthogonal (DCT-II) change of basis.
    """

    def __init__(self, grid: GridSpec, K1: int | None = None, K2: int | None = None):
        self.grid = grid
        self.K1 = grid.nx - 1 if K1 is None else min(int(K1), grid.nx - 1)
        self.K2 = grid.ny - 1 if K2 is None else min(int(K2), grid.ny - 1)
        self.lengths = grid.lengths
        self.origin = np.array(grid.origin)
        L1, L2 = self.lengths
        rel = grid.points - self.origin
        # separable tables: Bx (K1+1, nx), By (K2+1, ny)
        lx = np.arange(self.K1 + 1)
        ly = np.arange(self.K2 + 1)
        xs = grid.xs - self.origin[0]
        ys = grid.ys - self.origin[1]
        self._Bx = _axis_norm(lx, L1)[:, None] * np.cos(np.pi * np.outer(lx, xs) / L1)
        self._By = _axis_norm(ly, L2)[:, None] * np.cos(np.pi * np.outer(ly, ys) / L2)
        self.weights = sobolev_weights(self.K1, self.K2)
        self._rel = rel

    @property
    def shape(self):
        return (self.K1 + 1, self.K2 + 1)

    def transform(self, field) -> SpectralCoeffs:
        img = self.grid.to_image(np.asarray(field, dtype=float))  # (ny, nx)
        c = self._Bx @ img.T @ self._By.T * self.grid.cell_area
        return SpectralCoeffs(c, self.lengths)

    def inverse(self, coeffs) -> np.ndarray:
        c = coeffs.values if isinstance(coeffs, SpectralCoeffs) else np.asarray(coeffs)
        img = (self._Bx.T @ c @ self._By).T
        return img.ravel()

    def eval_at(self, p) -> np.ndarray:
        """All basis functions at absolute positions ``p``: shape (n, K1+1, K2+1)."""
        rel = np.atleast_2d(np.asarray(p, dtype=float)) - self.origin
        L1, L2 = self.lengths
        lx = np.arange(self.K1 + 1)
        ly = np.arange(self.K2 + 1)
        fx = _axis_norm(lx, L1) * np.cos(np.pi * np.outer(rel[:, 0], lx) / L1)
        fy = _axis_norm(ly, L2) * np.cos(np.pi * np.outer(rel[:, 1], ly) / L2)
        return fx[:, :, None] * fy[:, None, :]

    def grad_at(self, p) -> np.ndarray:
        """Gradients of all basis functions at absolute positions: shape (n, K1+1, K2+1, 2)."""
        rel = np.atleast_2d(np.asarray(p, dtype=float)) - self.origin
        L1, L2 = self.lengths
        lx = np.arange(self.K1 + 1)
        ly = np.arange(self.K2 + 1)
        ax = np.pi * lx / L1
        ay = np.pi * ly / L2
        cx = _axis_norm(lx, L1) * np.cos(np.outer(rel[:, 0], ax))
        cy = _axis_norm(ly, L2) * np.cos(np.outer(rel[:, 1], ay))
        sx = -_axis_norm(lx, L1) * ax * np.sin(np.outer(rel[:, 0], ax))
        sy = -_axis_norm(ly, L2) * ay * np.sin(np.outer(rel[:, 1], ay))
        gx = sx[:, :, None] * cy[:, None, :]
        gy = cx[:, :, None] * sy[:, None, :]
        return np.stack([gx, gy], axis=-1)


def sobolev_distance_sq(a: SpectralCoeffs, b: SpectralCoeffs, weights=None) -> float:
    if a.shape != b.shape:
        raise ValueError(f"coefficient index sets differ: {a.shape} vs {b.shape}")
    lam = sobolev_weights(a.shape[0] - 1, a.shape[1] - 1) if weights is None else np.asarray(weights)
    diff = a.values - b.values
    return float(np.sum(lam * diff * diff))


def truncate(coeffs: SpectralCoeffs, n_keep: int, weights=None) -> SpectralCoeffs:
    """Keep the ``n_keep`` coefficients with the largest Lambda_l c_l^2; ties go to the lower index."""
    if n_keep < 1:
        raise ValueError("n_keep must be >= 1")
    v = coeffs.values
    if n_keep >= v.size:
        return SpectralCoeffs(v.copy(), coeffs.lengths)
    lam = sobolev_weights(v.shape[0] - 1, v.shape[1] - 1) if weights is None else np.asarray(weights)
    energy = (lam * v * v).ravel()
    # stable sort on -energy keeps lexicographic order among ties
    order = np.argsort(-energy, kind="stable")[:n_keep]
    out = np.zeros(v.size)
    out[order] = v.ravel()[order]
    return SpectralCoeffs(out.reshape(v.shape), coeffs.lengths)
