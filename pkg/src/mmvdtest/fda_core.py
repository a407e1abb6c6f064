"""Grids, discretized curves and trapezoidal L2([0, 1]) geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing evaluation points inside [0, 1]."""

    points: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise ValueError("grid points must lie in [0, 1]")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(trapezoid_weights(pts)))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights; interior weight is (t[l+1] - t[l-1]) / 2."""
    t = np.asarray(points, dtype=np.float64)
    w = np.empty_like(t)
    w[0] = (t[1] - t[0]) / 2.0
    w[-1] = (t[-1] - t[-2]) / 2.0
    w[1:-1] = (t[2:] - t[:-2]) / 2.0
    return w


def make_equispaced_grid(n_points: int) -> Grid:
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    pts = np.array([(l - 1) / (n_points - 1) for l in range(1, n_points + 1)])
    return Grid(pts)


def weighted_sq_norm(diff: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_l w[l] * diff[..., l]**2, accumulated in a fixed order along the grid.

    The explicit loop makes scalar and batched evaluations agree bitwise,
    whatever the leading shape of ``diff``.
    """
    acc = np.zeros(diff.shape[:-1])
    for l in range(diff.shape[-1]):
        d = diff[..., l]
        acc += weights[l] * (d * d)
    return acc


def check_curve(values, grid: Grid, name: str = "curve") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size != len(grid):
        raise ValueError(f"{name} has {v.size} values, grid has {len(grid)} points")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def l2_sq_dist(f, g, grid: Grid) -> float:
    """Trapezoidal approximation of the integral of (f - g)^2 over the grid span."""
    f = check_curve(f, grid, "f")
    g = check_curve(g, grid, "g")
    return float(weighted_sq_norm(f - g, grid.weights))


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """One group's curves, one row per observation, on a shared grid."""

    grid: Grid
    curves: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.curves, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError("curves must be a 2-D array (observations x grid points)")
        if c.shape[0] < 2:
            raise ValueError(f"a sample needs at least 2 curves, got {c.shape[0]}")
        if c.shape[1] != len(self.grid):
            raise ValueError(
                f"curves have {c.shape[1]} columns, grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("curves contain non-finite values")
        object.__setattr__(self, "curves", _readonly(c))

    @property
    def size(self) -> int:
        return self.curves.shape[0]

    def __len__(self) -> int:
        return self.size


def common_grid(samples) -> Grid:
    """Return the grid shared by all samples, or raise if they disagree."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples given")
    grid = samples[0].grid
    for j, s in enumerate(samples[1:], start=2):
        if s.grid != grid:
            raise ValueError(f"sample {j} is on a different grid than sample 1")
    return grid
