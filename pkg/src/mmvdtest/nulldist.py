"""Spectral approximation of the asymptotic null law of n * T_n.

Under homogeneity n * T_n converges to

    sum_p lambda_p { (k - 2) Z_p + sum_j ( Y_{j,p}^2 / rho_j
                     - 2 sum_{l != j} sqrt(rho_l / rho_j) Y_{j,p} Y_{l,p} ) },

with Y_{j,p} iid N(0, 1), Z_p = sum_j Y_{j,p}^2 built from the same normals,
and lambda_p the eigenvalues of the integral operator of the degree-2 kernel

    Kt(x, y) = < (K(x,.) - m)^{(x)2} - V, (K(y,.) - m)^{(x)2} - V >_HS.

Estimating lambda_p: with M = H Lambda H (pooled double-centering, so
M_xy ~ <K(x,.) - m, K(y,.) - m>), the HS inner product of two rank-one
tensor squares is <a(x)a, b(x)b> = <a, b>^2, hence the first term is
W = M o M. Pairing (a(x)a) with V = E[b(x)b] averages W over one argument,
and ||V||^2 averages over both, so the empirical Kt is H W H. Its integral
operator under the empirical measure is (1/n) H W H.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import GramBlocks, GroupWeights
from .mmvd import mmvd_statistic

DRAW_CHUNK = 4096  # draws per RNG stream; fixed so output is independent of n_jobs


@dataclass(frozen=True, eq=False)
class NullSpectrum:
    eigenvalues: np.ndarray
    rho: tuple

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        if lam.ndim != 1:
            raise ValueError("eigenvalues must be a 1-D sequence")
        if lam.size and np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted nonincreasing")
        if lam.size and lam[-1] < 0:
            raise ValueError("eigenvalues must be nonnegative")
        rho = tuple(float(r) for r in self.rho)
        if any(not (0.0 < r < 1.0) for r in rho) or abs(sum(rho) - 1.0) > 1e-12:
            raise ValueError(f"rho must lie in (0, 1) and sum to 1, got {rho}")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "rho", rho)

    @property
    def truncation(self) -> int:
        return self.eigenvalues.size

    def truncated(self, P: int) -> "NullSpectrum":
        return NullSpectrum(self.eigenvalues[:P], self.rho)


@dataclass(frozen=True, eq=False)
class NullSample:
    draws: np.ndarray
    truncation: int
    seed: int

    def __post_init__(self) -> None:
        d = np.asarray(self.draws, dtype=np.float64)
        if not np.all(np.isfinite(d)):
            raise ValueError("null draws must be finite")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)


def _double_center(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=0)[None, :] - a.mean(axis=1)[:, None] + a.mean()


def default_truncation(eigenvalues: np.ndarray, retain: float = 0.999) -> int:
    """Smallest P whose leading eigenvalues carry ``retain`` of the trace (at least 1)."""
    lam = np.asarray(eigenvalues)
    total = lam.sum()
    if lam.size == 0 or total <= 0:
        return 1
    cum = np.cumsum(lam)
    return int(min(lam.size, np.searchsorted(cum, retain * total) + 1))


def centered_kernel_matrix(gram: GramBlocks) -> np.ndarray:
    """(1/n) H (M o M) H with M = H Lambda H, on the pooled sample."""
    m = _double_center(gram.full)
    return _double_center(m * m) / gram.n


def estimate_spectrum(gram: GramBlocks, truncation: int | None = None) -> NullSpectrum:
    """Eigenvalues of (1/n) H (M o M) H, nonincreasing, truncated.

    ``truncation=None`` keeps the fewest leading eigenvalues retaining 99.9% of
    the trace; ``truncation=0`` keeps all n.
    """
    n = gram.n
    if n < 3:
        raise ValueError(f"pooled sample size must be >= 3, got {n}")
    a = centered_kernel_matrix(gram)
    a = (a + a.T) / 2.0
    lam = np.linalg.eigvalsh(a)[::-1]
    top = max(lam[0], 0.0)
    if lam[-1] < -1e-8 * top and lam[-1] < -1e-14:
        raise ValueError(f"estimated spectrum has a large negative eigenvalue {lam[-1]:.3e}")
    lam = np.maximum(lam, 0.0)
    if truncation is None:
        P = default_truncation(lam)
    elif truncation == 0:
        P = n
    else:
        P = min(int(truncation), n)
    rho = GroupWeights.from_sizes(gram.sizes).pi
    return NullSpectrum(lam[:P], rho)


def _quadratic_forms(y: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """(k-2) Z + sum_j (Y_j^2/rho_j - 2 sum_{l!=j} sqrt(rho_l/rho_j) Y_j Y_l), last axis = j."""
    k = rho.size
    sq = y * y
    out = (k - 2) * sq.sum(axis=-1)
    for j in range(k):
        out = out + sq[..., j] / rho[j]
        for l in range(k):
            if l != j:
                out = out - 2.0 * math.sqrt(rho[l] / rho[j]) * y[..., j] * y[..., l]
    return out


def sample_null(
    spectrum: NullSpectrum,
    k: int,
    n_draws: int,
    seed: int,
    n_jobs: int = 1,
) -> NullSample:
    """Monte Carlo draws of the truncated limiting law.

    Draws are generated in fixed chunks of DRAW_CHUNK, chunk c from stream
    (seed, c), so the sample is the same for any ``n_jobs``.
    """
    lam = spectrum.eigenvalues
    if lam.size == 0:
        raise ValueError("empty spectrum")
    rho = np.asarray(spectrum.rho)
    if rho.size != k:
        raise ValueError(f"k = {k} but spectrum has {rho.size} group proportions")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    draws = np.empty(n_draws)
    starts = list(range(0, n_draws, DRAW_CHUNK))

    def run(c: int) -> None:
        a = starts[c]
        b = min(a + DRAW_CHUNK, n_draws)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(c,)))
        y = rng.standard_normal((b - a, lam.size, k))
        draws[a:b] = _quadratic_forms(y, rho) @ lam

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            list(ex.map(run, range(len(starts))))
    else:
        for c in range(len(starts)):
            run(c)
    return NullSample(draws, lam.size, seed)


def critical_value(sample: NullSample | np.ndarray, alpha: float) -> float:
    """Smallest draw whose rank is >= ceil((1 - alpha) * n_draws)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    d = np.sort(np.asarray(getattr(sample, "draws", sample)))
    if d.size < 100:
        raise ValueError(f"need at least 100 draws, got {d.size}")
    # guard against (1 - alpha) * m landing a hair above an integer
    rank = math.ceil((1.0 - alpha) * d.size - 1e-9)
    return float(d[max(rank, 1) - 1])


def quantiles(sample: NullSample, levels: Sequence[float]) -> list[float]:
    return [critical_value(sample, 1.0 - q) for q in levels]


@dataclass(frozen=True, eq=False)
class SpectralResult:
    statistic: float
    scaled_statistic: float
    critical_value: float
    alpha: float
    reject: bool
    spectrum: NullSpectrum
    sample: NullSample = field(repr=False)


def spectral_test(
    gram: GramBlocks,
    weights: GroupWeights | None = None,
    alpha: float = 0.05,
    n_draws: int = 20000,
    seed: int = 0,
    truncation: int | None = None,
    n_jobs: int = 1,
) -> SpectralResult:
    """Reject iff n * T_n exceeds the (1 - alpha) quantile of the sampled null law."""
    stat = mmvd_statistic(gram, weights).value
    spectrum = estimate_spectrum(gram, truncation)
    sample = sample_null(spectrum, gram.k, n_draws, seed, n_jobs)
    crit = critical_value(sample, alpha)
    scaled = gram.n * stat
    return SpectralResult(stat, scaled, crit, alpha, scaled > crit, spectrum, sample)
