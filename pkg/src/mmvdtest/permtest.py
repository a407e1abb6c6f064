"""Permutation calibration for Gram-based k-sample statistics."""

from __future__ import annotations

import enum
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import GramBlocks, GroupWeights
from .mmvd import GMMDStatistic, TestStatistic, _gmmd_from_means, _mmvd_from_hs


class Statistic(str, enum.Enum):
    MMVD = "mmvd"
    GMMD = "gmmd"


@dataclass(frozen=True)
class PermutationPlan:
    n_permutations: int = 999
    master_seed: int = 0
    statistic: Statistic = Statistic.MMVD

    def __post_init__(self) -> None:
        if int(self.n_permutations) < 1:
            raise ValueError(f"n_permutations must be >= 1, got {self.n_permutations}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "n_permutations", int(self.n_permutations))
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "statistic", Statistic(self.statistic))


@dataclass(frozen=True, eq=False)
class TestResult:
    observed: TestStatistic | GMMDStatistic
    p_value: float
    replicate_values: np.ndarray
    plan: PermutationPlan
    sizes: tuple

    __test__ = False

    def reject(self, alpha: float) -> bool:
        return self.p_value <= alpha


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index``; a pure function of both arguments."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def add_one_p_value(observed: float, replicates: np.ndarray) -> float:
    count = int(np.count_nonzero(np.asarray(replicates) >= observed))
    return (1 + count) / (len(replicates) + 1)


def warn_if_decoupled(weights: GroupWeights, sizes: Sequence[int]) -> None:
    expected = GroupWeights.from_sizes(sizes).as_array()
    if not np.allclose(weights.as_array(), expected, rtol=0, atol=1e-9):
        warnings.warn(
            "group weights differ from n_j/n; the asymptotic null law assumes "
            "weights proportional to sample sizes",
            stacklevel=3,
        )


class PartitionEngine:
    """Evaluates statistics for any regrouping of a fixed pooled sample.

    Group blocks are never materialised. With Z the n x k one-hot label
    matrix and M the pooled double-centered Gram, every block quantity is a
    product Z' X Z; e.g. for A = M^{(j,l)}

        ||Q_j A Q_l||_F^2 = ||A||_F^2 - ||A 1||^2 / n_l - ||A' 1||^2 / n_j
                            + (1' A 1)^2 / (n_j n_l).

    Group centering is invariant to the pooled centering, which only removes
    bulk magnitude before the subtractions. Results depend on the partition
    alone, not on the order of indices inside a group.
    """

    def __init__(self, gram: GramBlocks) -> None:
        full = gram.full
        centered = full - full.mean(axis=0)[None, :] - full.mean(axis=1)[:, None] + full.mean()
        self.sizes = np.asarray(gram.sizes, dtype=np.int64)
        self.k = gram.k
        self.n = gram.n
        self._m = centered
        self._m_sq = centered * centered
        self._nn = np.outer(self.sizes, self.sizes).astype(np.float64)
        self.base_labels = np.repeat(np.arange(self.k), self.sizes)

    def labels_from_permutation(self, perm: np.ndarray) -> np.ndarray:
        """First n_1 permuted indices form group 1, the next n_2 group 2, ..."""
        labels = np.empty(self.n, dtype=np.int64)
        labels[perm] = self.base_labels
        return labels

    def block_stats(self, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(HS inner-product matrix, Gram block means) for a labelling."""
        z = np.zeros((self.n, self.k))
        z[np.arange(self.n), labels] = 1.0
        row_sums = self._m @ z
        sq_sums = z.T @ (self._m_sq @ z)
        block_sums = z.T @ row_sums
        rr = z.T @ (row_sums * row_sums)
        sizes = self.sizes.astype(np.float64)
        frob = (
            sq_sums
            - rr / sizes[None, :]
            - rr.T / sizes[:, None]
            + block_sums * block_sums / self._nn
        )
        hs = frob / self._nn
        hs = (hs + hs.T) / 2.0
        means = block_sums / self._nn
        means = (means + means.T) / 2.0
        return hs, means

    def values(self, labels: np.ndarray, pi: np.ndarray, statistics) -> list[float]:
        hs, means = self.block_stats(labels)
        out = []
        for s in statistics:
            if s is Statistic.MMVD:
                out.append(_mmvd_from_hs(hs, pi)[0])
            else:
                out.append(_gmmd_from_means(means, pi)[0])
        return out


def _replicates(
    engine: PartitionEngine,
    pi: np.ndarray,
    statistics: Sequence[Statistic],
    n_permutations: int,
    master_seed: int,
    n_jobs: int,
) -> np.ndarray:
    out = np.empty((len(statistics), n_permutations))

    def run(chunk: range) -> None:
        for b in chunk:
            perm = replicate_rng(master_seed, b).permutation(engine.n)
            out[:, b] = engine.values(engine.labels_from_permutation(perm), pi, statistics)

    n_jobs = max(1, int(n_jobs))
    if n_jobs == 1:
        run(range(n_permutations))
    else:
        step = -(-n_permutations // n_jobs)
        chunks = [range(a, min(a + step, n_permutations)) for a in range(0, n_permutations, step)]
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            list(ex.map(run, chunks))
    return out


def _observed(engine: PartitionEngine, weights: GroupWeights, statistic: Statistic):
    hs, means = engine.block_stats(engine.base_labels)
    pi = weights.as_array()
    if statistic is Statistic.MMVD:
        value, pair = _mmvd_from_hs(hs, pi)
        return TestStatistic(value, pair, weights, np.diag(hs).copy(), hs)
    value, pair = _gmmd_from_means(means, pi)
    return GMMDStatistic(value, pair, weights)


def permutation_tests(
    gram: GramBlocks,
    weights: GroupWeights | None,
    n_permutations: int,
    master_seed: int,
    statistics: Sequence[Statistic] = (Statistic.MMVD,),
    n_jobs: int = 1,
) -> dict[Statistic, TestResult]:
    """Several statistics calibrated on one shared set of permutations."""
    statistics = [Statistic(s) for s in statistics]
    if weights is None:
        weights = GroupWeights.from_sizes(gram.sizes)
    if len(weights) != gram.k:
        raise ValueError(f"{len(weights)} weights for {gram.k} groups")
    engine = PartitionEngine(gram)
    pi = weights.as_array()
    reps = _replicates(engine, pi, statistics, int(n_permutations), int(master_seed), n_jobs)
    results = {}
    for i, s in enumerate(statistics):
        observed = _observed(engine, weights, s)
        plan = PermutationPlan(n_permutations, master_seed, s)
        values = reps[i].copy()
        values.setflags(write=False)
        results[s] = TestResult(
            observed=observed,
            p_value=add_one_p_value(observed.value, values),
            replicate_values=values,
            plan=plan,
            sizes=gram.sizes,
        )
    return results


def permutation_test(
    gram: GramBlocks,
    weights: GroupWeights | None = None,
    plan: PermutationPlan = PermutationPlan(),
    n_jobs: int = 1,
) -> TestResult:
    """Permutation p-value (1 + #{replicate >= observed}) / (B + 1).

    Replicate b relabels the pooled sample with a uniform permutation drawn
    from its own stream (master_seed, b), so results are bitwise identical for
    any ``n_jobs``. Kernels are never re-evaluated.
    """
    if weights is not None:
        warn_if_decoupled(weights, gram.sizes)
    res = permutation_tests(
        gram, weights, plan.n_permutations, plan.master_seed, (plan.statistic,), n_jobs
    )
    return res[plan.statistic]
