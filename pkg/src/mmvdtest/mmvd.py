"""MMVD statistic (and the GMMD baseline) from a partitioned Gram matrix.

With Q_j = I - 11'/n_j the centering matrix of group j and Lambda^{(j,l)} the
(j, l) Gram block, the empirical covariance embeddings satisfy

    <V_j, V_l>_HS = ||Q_j Lambda^{(j,l)} Q_l||_F^2 / (n_j n_l),

(trace cyclicity plus Q symmetric idempotent), and ||V_j||^2 is the j = l case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GramBlocks, GroupWeights

# pair terms this far below zero are rounding noise; anything lower is a bug
_CLAMP_TOL = 1e-12
_FORMS_RTOL = 1e-10


class NumericalConsistencyError(ArithmeticError):
    """Two algebraically identical computations disagreed beyond rounding."""


@dataclass(frozen=True, eq=False)
class TestStatistic:
    value: float
    pair_mvd_sq: np.ndarray
    weights: GroupWeights
    hs_norms: np.ndarray
    hs_inners: np.ndarray

    __test__ = False  # not a pytest class


@dataclass(frozen=True, eq=False)
class GMMDStatistic:
    value: float
    pair_mmd_sq: np.ndarray
    weights: GroupWeights


def centered_block(block: np.ndarray) -> np.ndarray:
    """Q_j B Q_l: remove row means and column means, add back the grand mean."""
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 2 or 0 in b.shape:
        raise ValueError(f"expected a non-empty 2-D block, got shape {b.shape}")
    row = b.mean(axis=1, keepdims=True)
    col = b.mean(axis=0, keepdims=True)
    return b - row - col + b.mean()


def _frob_sq(c: np.ndarray) -> float:
    flat = c.ravel()
    return float(np.dot(flat, flat))


def hs_norm_sq(block_jj: np.ndarray, n_j: int) -> float:
    b = np.asarray(block_jj)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError(f"diagonal block must be square, got shape {b.shape}")
    if b.shape[0] != n_j:
        raise ValueError(f"block is {b.shape[0]}x{b.shape[0]}, n_j = {n_j}")
    return _frob_sq(centered_block(b)) / (n_j * n_j)


def hs_inner(block_jl: np.ndarray, n_j: int, n_l: int) -> float:
    b = np.asarray(block_jl)
    if b.shape != (n_j, n_l):
        raise ValueError(f"block has shape {b.shape}, expected ({n_j}, {n_l})")
    return _frob_sq(centered_block(b)) / (n_j * n_l)


def _hs_matrix(full: np.ndarray, offsets) -> np.ndarray:
    k = len(offsets) - 1
    out = np.empty((k, k))
    for j in range(k):
        rj = slice(offsets[j], offsets[j + 1])
        nj = offsets[j + 1] - offsets[j]
        for l in range(j, k):
            rl = slice(offsets[l], offsets[l + 1])
            nl = offsets[l + 1] - offsets[l]
            out[j, l] = out[l, j] = _frob_sq(centered_block(full[rj, rl])) / (nj * nl)
    return out


def _check_weights(gram: GramBlocks, weights: GroupWeights) -> np.ndarray:
    if len(weights) != gram.k:
        raise ValueError(f"{len(weights)} weights for {gram.k} groups")
    return weights.as_array()


def _pair_matrix(hs: np.ndarray) -> np.ndarray:
    d = np.diag(hs)
    pair = d[:, None] + d[None, :] - 2.0 * hs
    np.fill_diagonal(pair, 0.0)
    guard = _CLAMP_TOL * np.maximum(1.0, d[:, None] + d[None, :])
    if np.any(pair < -guard):
        raise NumericalConsistencyError(
            f"negative squared discrepancy {pair.min():.3e} beyond rounding tolerance"
        )
    return np.maximum(pair, 0.0)


def _weighted_pair_sum(pair: np.ndarray, pi: np.ndarray) -> float:
    # fixed ascending (j, l) order
    k = len(pi)
    total = 0.0
    for j in range(k):
        for l in range(k):
            if l != j:
                total += pi[l] * pair[j, l]
    return total


def _collected_form(hs: np.ndarray, pi: np.ndarray) -> float:
    k = len(pi)
    total = 0.0
    for j in range(k):
        total += (1.0 + (k - 2) * pi[j]) * hs[j, j]
    for j in range(k):
        for l in range(k):
            if l != j:
                total -= 2.0 * pi[l] * hs[j, l]
    return total


def _mmvd_from_hs(hs: np.ndarray, pi: np.ndarray, check: bool = True):
    pair = _pair_matrix(hs)
    value = _weighted_pair_sum(pair, pi)
    if check:
        other = _collected_form(hs, pi)
        scale = max(abs(value), float(np.trace(hs)), np.finfo(float).tiny)
        if abs(value - other) > _FORMS_RTOL * scale:
            raise NumericalConsistencyError(
                f"pairwise form {value!r} and collected form {other!r} disagree"
            )
    return value, pair


def mmvd_statistic(gram: GramBlocks, weights: GroupWeights | None = None) -> TestStatistic:
    """T_n = sum_j sum_{l != j} pi_l ||V_j - V_l||^2, with its decomposition."""
    if weights is None:
        weights = GroupWeights.from_sizes(gram.sizes)
    pi = _check_weights(gram, weights)
    hs = _hs_matrix(gram.full, gram.offsets)
    value, pair = _mmvd_from_hs(hs, pi)
    return TestStatistic(
        value=value,
        pair_mvd_sq=pair,
        weights=weights,
        hs_norms=np.diag(hs).copy(),
        hs_inners=hs,
    )


def _mean_matrix(full: np.ndarray, offsets) -> np.ndarray:
    k = len(offsets) - 1
    out = np.empty((k, k))
    for j in range(k):
        rj = slice(offsets[j], offsets[j + 1])
        for l in range(j, k):
            out[j, l] = out[l, j] = full[rj, offsets[l] : offsets[l + 1]].mean()
    return out


def _gmmd_from_means(means: np.ndarray, pi: np.ndarray):
    d = np.diag(means)
    pair = d[:, None] + d[None, :] - 2.0 * means
    np.fill_diagonal(pair, 0.0)
    guard = _CLAMP_TOL * np.maximum(1.0, np.abs(d[:, None] + d[None, :]))
    if np.any(pair < -guard):
        raise NumericalConsistencyError(
            f"negative squared mean discrepancy {pair.min():.3e}"
        )
    pair = np.maximum(pair, 0.0)
    return _weighted_pair_sum(pair, pi), pair


def gmmd_statistic(gram: GramBlocks, weights: GroupWeights | None = None) -> GMMDStatistic:
    """Baseline: sum_j sum_{l != j} pi_l ||m_j - m_l||^2 from Gram block means."""
    if weights is None:
        weights = GroupWeights.from_sizes(gram.sizes)
    pi = _check_weights(gram, weights)
    value, pair = _gmmd_from_means(_mean_matrix(gram.full, gram.offsets), pi)
    return GMMDStatistic(value=value, pair_mmd_sq=pair, weights=weights)
