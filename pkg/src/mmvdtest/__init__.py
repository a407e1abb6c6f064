"""Kernel k-sample homogeneity testing for functional data via MMVD."""

from .fda_core import FunctionalSample, Grid, l2_sq_dist, make_equispaced_grid
from .kernels import GramBlocks, GroupWeights, KernelSpec, build_gram, eval_kernel
from .mmvd import (
    NumericalConsistencyError,
    TestStatistic,
    centered_block,
    gmmd_statistic,
    hs_inner,
    hs_norm_sq,
    mmvd_statistic,
)
from .nulldist import (
    NullSample,
    NullSpectrum,
    critical_value,
    estimate_spectrum,
    sample_null,
    spectral_test,
)
from .permtest import PermutationPlan, Statistic, TestResult, permutation_test
from .simgen import ModelSpec, MonteCarloReport, generate, monte_carlo

__all__ = [
    "FunctionalSample", "Grid", "l2_sq_dist", "make_equispaced_grid",
    "GramBlocks", "GroupWeights", "KernelSpec", "build_gram", "eval_kernel",
    "NumericalConsistencyError", "TestStatistic", "centered_block", "gmmd_statistic",
    "hs_inner", "hs_norm_sq", "mmvd_statistic",
    "NullSample", "NullSpectrum", "critical_value", "estimate_spectrum", "sample_null",
    "spectral_test",
    "PermutationPlan", "Statistic", "TestResult", "permutation_test",
    "ModelSpec", "MonteCarloReport", "generate", "monte_carlo",
]
