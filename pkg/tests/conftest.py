import numpy as np
import pytest
from hypothesis import settings

from mmvdtest.fda_core import FunctionalSample, make_equispaced_grid
from mmvdtest.kernels import GramBlocks

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid21():
    return make_equispaced_grid(21)


def random_samples(rng, sizes, n_points=21, scale=1.0):
    grid = make_equispaced_grid(n_points)
    return [FunctionalSample(grid, scale * rng.standard_normal((n, n_points))) for n in sizes]


def linear_gram(samples) -> GramBlocks:
    """K(x, y) = sum_t w_t x(t) y(t) with trapezoid weights."""
    w = samples[0].grid.weights
    X = np.vstack([s.curves for s in samples])
    G = (X * w) @ X.T
    G = np.triu(G) + np.triu(G, 1).T
    return GramBlocks(tuple(s.size for s in samples), G)


def feature_covariances(samples):
    """Explicit d x d empirical covariances of sqrt(w) * x, 1/n_j normalised."""
    w = samples[0].grid.weights
    out = []
    for s in samples:
        phi = s.curves * np.sqrt(w)
        c = phi - phi.mean(axis=0)
        out.append(c.T @ c / s.size)
    return out


def brute_force_mmvd(samples, pi):
    covs = feature_covariances(samples)
    k = len(covs)
    return sum(
        pi[l] * np.sum((covs[j] - covs[l]) ** 2) for j in range(k) for l in range(k) if l != j
    )
