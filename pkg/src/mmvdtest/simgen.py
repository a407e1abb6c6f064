"""Synthetic three-group functional data and Monte Carlo size/power runs.

The N(0, t) noise is a standard Brownian motion on the grid by default (its
marginal at t is N(0, t)); ``gaussian_noise="white"`` draws independent
N(0, t) values per grid point instead. Exp(t) (mean t; ``exp_param="rate"``
for rate t) and Poisson(t) (mean t) are drawn independently per grid point.
Every noise is identically 0 at t = 0.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .fda_core import FunctionalSample, Grid, make_equispaced_grid
from .kernels import KernelSpec, build_gram
from .nulldist import spectral_test
from .permtest import PermutationPlan, Statistic, permutation_tests


def _gauss(rng: np.random.Generator, t: np.ndarray, n: int, spec: "ModelSpec") -> np.ndarray:
    z = rng.standard_normal((n, t.size))
    if spec.gaussian_noise == "white":
        return z * np.sqrt(t)
    # increments over [0, t_1], [t_1, t_2], ...; zero at t = 0 when the grid starts there
    steps = np.sqrt(np.diff(t, prepend=0.0))
    return np.cumsum(z * steps, axis=1)


def _expo(rng: np.random.Generator, t: np.ndarray, n: int, spec: "ModelSpec") -> np.ndarray:
    e = rng.standard_exponential((n, t.size))
    if spec.exp_param == "mean":
        return e * t
    scale = np.divide(1.0, t, out=np.zeros_like(t), where=t > 0)
    return e * scale


def _poisson(rng: np.random.Generator, t: np.ndarray, n: int, spec: "ModelSpec") -> np.ndarray:
    return rng.poisson(np.broadcast_to(t, (n, t.size))).astype(np.float64)


# (mean function, noise) per group
MODELS: dict[int, list[tuple[Callable[[np.ndarray], np.ndarray], Callable]]] = {
    1: [
        (lambda t: t * (1 - t), _gauss),
        (lambda t: t * (1 - t), _gauss),
        (lambda t: t * (1 - t), _gauss),
    ],
    2: [
        (lambda t: t * (1 - t) ** 5, _gauss),
        (lambda t: t**2 * (1 - t) ** 4, _gauss),
        # third noise is unnamed in the model list; the exponential one is the unused symbol
        (lambda t: t**3 * (1 - t) ** 3, _expo),
    ],
    3: [
        (lambda t: t * (1 - t) ** 3, _gauss),
        (lambda t: t * (1 - t) ** 3 - t, _poisson),
        (lambda t: t * (1 - t) ** 3, _gauss),
    ],
}


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    group_sizes: tuple = (100, 100, 100)
    grid: Grid = field(default_factory=lambda: make_equispaced_grid(21))
    seed: int = 0
    exp_param: str = "mean"
    gaussian_noise: str = "brownian"

    def __post_init__(self) -> None:
        if self.model_id not in MODELS:
            raise ValueError(f"model_id must be 1, 2 or 3, got {self.model_id!r}")
        sizes = tuple(int(s) for s in self.group_sizes)
        if len(sizes) != 3:
            raise ValueError("the simulation models have exactly 3 groups")
        if min(sizes) < 2:
            raise ValueError("group sizes must be >= 2")
        if not isinstance(self.grid, Grid):
            raise ValueError("grid must be a Grid")
        if self.exp_param not in ("mean", "rate"):
            raise ValueError("exp_param must be 'mean' or 'rate'")
        if self.gaussian_noise not in ("brownian", "white"):
            raise ValueError("gaussian_noise must be 'brownian' or 'white'")
        object.__setattr__(self, "group_sizes", sizes)


def generate(spec: ModelSpec) -> list[FunctionalSample]:
    """Draw the three groups of ``spec`` (groups in order, from one seeded stream)."""
    rng = np.random.default_rng(spec.seed)
    t = spec.grid.points
    out = []
    for (mean_fn, noise), n in zip(MODELS[spec.model_id], spec.group_sizes):
        curves = mean_fn(t)[None, :] + noise(rng, t, n, spec)
        out.append(FunctionalSample(spec.grid, curves))
    return out


def derived_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    model: ModelSpec
    replications: int
    alpha: float
    rejection_rate: float
    per_method: dict
    rejections: dict
    n_permutations: int
    master_seed: int
    gamma: float
    wall_time: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "model": self.model.model_id,
            "group_sizes": list(self.model.group_sizes),
            "grid_points": len(self.model.grid),
            "exp_param": self.model.exp_param,
            "gaussian_noise": self.model.gaussian_noise,
            "data_seed": self.model.seed,
            "replications": self.replications,
            "alpha": self.alpha,
            "n_permutations": self.n_permutations,
            "seed": self.master_seed,
            "gamma": self.gamma,
            "rejection_rate": self.rejection_rate,
            "per_method": dict(self.per_method),
            "rejections": dict(self.rejections),
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


def _one_replication(args) -> dict:
    spec, r, plan_seed, n_perm, gamma, alpha, methods, n_draws = args
    data_spec = replace(spec, seed=derived_seed(spec.seed, r))
    gram = build_gram(generate(data_spec), KernelSpec(gamma=gamma))
    out = {}
    perm_methods = [Statistic(m) for m in methods if m != "spectral"]
    if perm_methods:
        res = permutation_tests(gram, None, n_perm, derived_seed(plan_seed, r), perm_methods)
        for s, tr in res.items():
            out[s.value] = tr.p_value <= alpha
    if "spectral" in methods:
        sres = spectral_test(gram, alpha=alpha, n_draws=n_draws, seed=derived_seed(plan_seed, r))
        out["spectral"] = bool(sres.reject)
    return out


def monte_carlo(
    spec: ModelSpec,
    replications: int,
    plan: PermutationPlan = PermutationPlan(n_permutations=199),
    alpha: float = 0.05,
    methods: Sequence[str] = ("mmvd", "gmmd"),
    gamma: float = 0.5,
    n_jobs: int = 1,
    spectral_draws: int = 10000,
) -> MonteCarloReport:
    """Empirical rejection rates over fresh datasets; reject iff p <= alpha.

    Replication r draws data with seed derived from (spec.seed, r) and
    permutations from (plan.master_seed, r); all permutation statistics share
    the same permutations. ``methods`` may include "spectral" (asymptotic
    calibration). The first method gives ``rejection_rate``.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    methods = [str(getattr(m, "value", m)).lower() for m in methods]
    for m in methods:
        if m not in ("mmvd", "gmmd", "spectral"):
            raise ValueError(f"unknown method {m!r}")
    tasks = [
        (spec, r, plan.master_seed, plan.n_permutations, gamma, alpha, tuple(methods), spectral_draws)
        for r in range(replications)
    ]
    t0 = time.perf_counter()
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            outcomes = list(ex.map(_one_replication, tasks, chunksize=4))
    else:
        outcomes = [_one_replication(a) for a in tasks]
    wall = time.perf_counter() - t0
    rejections = {m: sum(bool(o[m]) for o in outcomes) for m in methods}
    per_method = {m: rejections[m] / replications for m in methods}
    return MonteCarloReport(
        model=spec,
        replications=replications,
        alpha=alpha,
        rejection_rate=per_method[methods[0]],
        per_method=per_method,
        rejections=rejections,
        n_permutations=plan.n_permutations,
        master_seed=plan.master_seed,
        gamma=gamma,
        wall_time=wall,
    )


def table_csv(reports: Sequence[MonteCarloReport]) -> str:
    """Size/power table: one row per (model, n), one column per method."""
    methods: list[str] = []
    for rep in reports:
        for m in rep.per_method:
            if m not in methods:
                methods.append(m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "n", "replications"] + methods)
    for rep in reports:
        sizes = rep.model.group_sizes
        n = sizes[0] if len(set(sizes)) == 1 else "/".join(map(str, sizes))
        w.writerow(
            [rep.model.model_id, n, rep.replications]
            + [f"{rep.per_method[m]:.3f}" if m in rep.per_method else "" for m in methods]
        )
    return buf.getvalue()
