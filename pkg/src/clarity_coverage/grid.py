"""Rectangular cell-centred grids over a box-shaped mission domain."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """``nx * ny`` cells of side ``spacing`` (km) whose lower-left corner is ``origin``.

    Grid points sit at cell centres, ordered row-major (x fastest). The domain
    box is ``[ox, ox + nx*spacing] x [oy, oy + ny*spacing]``.
    """

    nx: int
    ny: int
    spacing: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs nx, ny >= 1")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def for_domain(cls, length_x: float, length_y: float, spacing: float, origin=(0.0, 0.0)) -> "GridSpec":
        nx = max(1, int(round(length_x / spacing)))
        ny = max(1, int(round(length_y / spacing)))
        if not np.isclose(nx * spacing, length_x) or not np.isclose(ny * spacing, length_y):
            raise ValueError(f"domain {length_x} x {length_y} km is not a whole number of {spacing} km cells")
        return cls(nx, ny, spacing, origin)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def lengths(self) -> tuple[float, float]:
        return (self.nx * self.spacing, self.ny * self.spacing)

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.origin)
        return lo, lo + np.array(self.lengths)

    @cached_property
    def xs(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.spacing

    @cached_property
    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.spacing

    @cached_property
    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        pts.setflags(write=False)
        return pts

    def contains(self, p, tol: float = 1e-9) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        lo, hi = self.bounds
        return np.all((p >= lo - tol) & (p <= hi + tol), axis=1)

    def clamp(self, p) -> np.ndarray:
        lo, hi = self.bounds
        return np.clip(np.asarray(p, dtype=float), lo, hi)

    def to_image(self, values) -> np.ndarray:
        return np.asarray(values).reshape(self.ny, self.nx)


@dataclass(frozen=True)
class NodeGrid:
    """Node-based grid (points on cell corners) covering a box, used for ground truth."""

    nx: int
    ny: int
    spacing: float
    origin: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def covering(cls, grid: GridSpec, refine: int = 2) -> "NodeGrid":
        h = grid.spacing / refine
        return cls(grid.nx * refine + 1, grid.ny * refine + 1, h, grid.origin)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @cached_property
    def points(self) -> np.ndarray:
        xs = self.origin[0] + np.arange(self.nx) * self.spacing
        ys = self.origin[1] + np.arange(self.ny) * self.spacing
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def interpolate(self, values, p) -> np.ndarray:
        """Bilinear interpolation of node values at points ``p`` (must lie inside the box)."""
        img = np.asarray(values, dtype=float).reshape(self.ny, self.nx)
        p = np.atleast_2d(np.asarray(p, dtype=float))
        u = (p[:, 0] - self.origin[0]) / self.spacing
        v = (p[:, 1] - self.origin[1]) / self.spacing
        tol = 1e-9
        if np.any(u < -tol) or np.any(v < -tol) or np.any(u > self.nx - 1 + tol) or np.any(v > self.ny - 1 + tol):
            raise ValueError("interpolation point outside the truth grid")
        u = np.clip(u, 0, self.nx - 1)
        v = np.clip(v, 0, self.ny - 1)
        i0 = np.minimum(np.floor(u).astype(int), max(self.nx - 2, 0))
        j0 = np.minimum(np.floor(v).astype(int), max(self.ny - 2, 0))
        i1 = np.minimum(i0 + 1, self.nx - 1)
        j1 = np.minimum(j0 + 1, self.ny - 1)
        a = u - i0
        b = v - j0
        return ((1 - a) * (1 - b) * img[j0, i0] + a * (1 - b) * img[j0, i1]
                + (1 - a) * b * img[j1, i0] + a * b * img[j1, i1])
