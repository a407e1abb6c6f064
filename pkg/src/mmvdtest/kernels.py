"""Kernels on discretized L2 curves and the pooled Gram matrix."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fda_core import FunctionalSample, Grid, common_grid, check_curve, weighted_sq_norm


class KernelFamily(str, enum.Enum):
    # Only families with sup K < inf belong here; boundedness is not checked at runtime.
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily = KernelFamily.GAUSSIAN
    gamma: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be a positive real, got {self.gamma}")

    def from_sq_dist(self, d2):
        return np.exp(-self.gamma * d2)


def eval_kernel(spec: KernelSpec, x, y, grid: Grid) -> float:
    x = check_curve(x, grid, "x")
    y = check_curve(y, grid, "y")
    return float(spec.from_sq_dist(weighted_sq_norm(x - y, grid.weights)))


@dataclass(frozen=True, eq=False)
class GramBlocks:
    """Pooled n x n kernel matrix with its k x k group partition."""

    sizes: tuple
    full: np.ndarray
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2:
            raise ValueError("need at least 2 groups")
        if min(sizes) < 1:
            raise ValueError("group sizes must be positive")
        full = np.array(self.full, dtype=np.float64, copy=True)
        n = sum(sizes)
        if full.shape != (n, n):
            raise ValueError(f"Gram matrix has shape {full.shape}, sizes sum to {n}")
        if not np.array_equal(full, full.T):
            raise ValueError("Gram matrix is not symmetric")
        full.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "full", full)
        object.__setattr__(self, "offsets", np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def block(self, j: int, l: int) -> np.ndarray:
        o = self.offsets
        return self.full[o[j] : o[j + 1], o[l] : o[l + 1]]

    def permuted(self, perm: np.ndarray) -> "GramBlocks":
        """Gram of the pooled sample reordered by ``perm``, same group sizes."""
        perm = np.asarray(perm)
        return GramBlocks(self.sizes, self.full[np.ix_(perm, perm)])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.full)[0])

    def is_psd(self) -> bool:
        return self.min_eigenvalue() >= -1e-8 * self.n


@dataclass(frozen=True)
class GroupWeights:
    pi: tuple

    def __post_init__(self) -> None:
        pi = tuple(float(p) for p in self.pi)
        if any(not (0.0 < p < 1.0) for p in pi):
            raise ValueError(f"weights must lie in (0, 1), got {pi}")
        if abs(sum(pi) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got sum {sum(pi)!r}")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupWeights":
        n = sum(sizes)
        pi = [s / n for s in sizes]
        # absorb rounding so the sum check holds exactly
        pi[-1] = 1.0 - sum(pi[:-1])
        return cls(tuple(pi))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pi)

    def __len__(self) -> int:
        return len(self.pi)


def _gram_rows(curves: np.ndarray, weights: np.ndarray, spec: KernelSpec, a: int, b: int):
    diff = curves[a:b, None, :] - curves[None, a:, :]
    return spec.from_sq_dist(weighted_sq_norm(diff, weights))


def build_gram(
    samples: Sequence[FunctionalSample],
    spec: KernelSpec = KernelSpec(),
    n_jobs: int = 1,
    chunk_rows: int = 64,
) -> GramBlocks:
    """Kernel matrix of the pooled sample, groups stacked in the given order.

    Only the upper triangle is evaluated (in row chunks, optionally on a thread
    pool); the lower triangle is its mirror, so the result is exactly symmetric
    and does not depend on ``n_jobs`` or ``chunk_rows``.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError(f"need at least 2 groups, got {len(samples)}")
    grid = common_grid(samples)
    pooled = np.vstack([s.curves for s in samples])
    n = pooled.shape[0]
    full = np.zeros((n, n))
    starts = range(0, n, chunk_rows)

    def work(a: int) -> None:
        b = min(a + chunk_rows, n)
        full[a:b, a:] = _gram_rows(pooled, grid.weights, spec, a, b)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            list(ex.map(work, starts))
    else:
        for a in starts:
            work(a)
    upper = np.triu(full)
    full = upper + np.triu(upper, 1).T
    return GramBlocks(tuple(s.size for s in samples), full)
