"""Command-line interface: ``mmvd test``, ``mmvd simulate``, ``mmvd nulldist``.

Exit codes: 0 success (whatever the test decides), 2 usage or data error,
3 internal numerical-consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .fda_core import FunctionalSample, Grid, make_equispaced_grid
from .kernels import GramBlocks, GroupWeights, KernelSpec, build_gram
from .mmvd import NumericalConsistencyError
from .nulldist import critical_value, estimate_spectrum, quantiles, sample_null
from .mmvd import mmvd_statistic
from .permtest import PermutationPlan, Statistic, permutation_test, warn_if_decoupled
from .simgen import ModelSpec, derived_seed, generate, monte_carlo, table_csv

log = logging.getLogger("mmvdtest")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


class DataError(ValueError):
    """Bad user input; reported with exit code 2."""


# ---------------------------------------------------------------- CSV I/O


def _parse_row(text: str, path, lineno: int) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise DataError(f"{path}:{lineno}: cannot parse numbers from {text[:60]!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise DataError(f"{path}:{lineno}: non-finite value")
    return vals


def read_curves_csv(path) -> FunctionalSample:
    """First row: grid points. Every following non-empty row: one curve."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"{path}: {e.strerror or e}") from None
    rows = [(i, ln.strip()) for i, ln in enumerate(lines, start=1) if ln.strip()]
    if not rows:
        raise DataError(f"{path}: empty file")
    first_line, header = rows[0]
    grid_pts = _parse_row(header, path, first_line)
    try:
        grid = Grid(np.array(grid_pts))
    except ValueError as e:
        raise DataError(f"{path}:{first_line}: invalid grid: {e}") from None
    curves = []
    for lineno, text in rows[1:]:
        vals = _parse_row(text, path, lineno)
        if len(vals) != len(grid):
            raise DataError(
                f"{path}:{lineno}: row has {len(vals)} values, grid has {len(grid)}"
            )
        curves.append(vals)
    if len(curves) < 2:
        raise DataError(f"{path}: need at least 2 curves, found {len(curves)}")
    return FunctionalSample(grid, np.array(curves))


def write_curves_csv(path, sample: FunctionalSample) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(t)) for t in sample.grid.points])
        for row in sample.curves:
            w.writerow([repr(float(v)) for v in row])


def write_matrix_csv(path, a: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(a):
            w.writerow([repr(float(v)) for v in row])


def load_groups(paths: Sequence[str]) -> list[FunctionalSample]:
    if len(paths) < 2:
        raise DataError("need at least 2 input files (one per group)")
    samples = [read_curves_csv(p) for p in paths]
    for p, s in zip(paths[1:], samples[1:]):
        if s.grid != samples[0].grid:
            raise DataError(f"{p}: grid row differs from {paths[0]}")
    return samples


# ---------------------------------------------------------------- helpers


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def resolve_weights(mode: str, sizes: Sequence[int]) -> GroupWeights:
    if mode == "proportional":
        return GroupWeights.from_sizes(sizes)
    try:
        vals = [float(x) for x in mode.split(",")]
    except ValueError:
        raise DataError(f"--weights must be 'proportional' or a comma list, got {mode!r}")
    if len(vals) != len(sizes):
        raise DataError(f"--weights has {len(vals)} entries for {len(sizes)} groups")
    if any(v <= 0 for v in vals) or abs(sum(vals) - 1.0) > 1e-9:
        raise DataError("explicit weights must be positive and sum to 1 (within 1e-9)")
    # renormalise the 1e-9 slack away so GroupWeights' exact check holds
    total = sum(vals)
    vals = [v / total for v in vals]
    vals[-1] = 1.0 - sum(vals[:-1])
    try:
        w = GroupWeights(tuple(vals))
    except ValueError as e:
        raise DataError(str(e)) from None
    warn_if_decoupled(w, sizes)
    return w


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("MMVD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DataError(f"MMVD_THREADS must be an integer, got {env!r}")
    return 1


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _kv_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    for k, v in d.items():
        if isinstance(v, (list, tuple)):
            v = json.dumps(v)
        w.writerow([k, v])
    return buf.getvalue()


def _dump(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- test


def cmd_test(args) -> int:
    samples = load_groups(args.files)
    sizes = [s.size for s in samples]
    weights = resolve_weights(args.weights, sizes)
    threads = resolve_threads(args.threads)
    gram = build_gram(samples, KernelSpec(gamma=args.kernel_gamma), n_jobs=threads)
    if args.gram_out:
        write_matrix_csv(args.gram_out, gram.full)
    plan = PermutationPlan(args.permutations, args.seed, Statistic(args.statistic))
    res = permutation_test(gram, weights, plan, n_jobs=threads)
    report = {
        "statistic": res.observed.value,
        "statistic_kind": plan.statistic.value,
        "p_value": res.p_value,
        "alpha": args.alpha,
        "reject": bool(res.p_value <= args.alpha),
        "B": plan.n_permutations,
        "seed": plan.master_seed,
        "n_sizes": sizes,
        "gamma": args.kernel_gamma,
        "weights": list(weights.pi),
        "replicate_values": res.replicate_values.tolist(),
    }
    if plan.statistic is Statistic.MMVD:
        report["pair_mvd_sq"] = res.observed.pair_mvd_sq.tolist()
        report["hs_norms"] = res.observed.hs_norms.tolist()
    else:
        report["pair_mmd_sq"] = res.observed.pair_mmd_sq.tolist()
    if args.format == "json":
        _emit(_dump(report), args.out)
    else:
        flat = {k: v for k, v in report.items() if k != "replicate_values"}
        _emit(_kv_csv(flat), args.out)
    return EXIT_OK


def validate_test_report(report: dict) -> None:
    """Re-check the invariants of a ``test`` JSON report; raises ValueError."""
    reps = np.asarray(report["replicate_values"], dtype=float)
    if reps.size != report["B"]:
        raise ValueError("replicate count does not match B")
    stat = report["statistic"]
    if stat < 0:
        raise ValueError("negative statistic")
    p = (1 + int(np.count_nonzero(reps >= stat))) / (reps.size + 1)
    if p != report["p_value"]:
        raise ValueError(f"p_value {report['p_value']} inconsistent with replicates ({p})")
    if not 1 / (reps.size + 1) <= p <= 1:
        raise ValueError("p_value out of range")
    if report["reject"] != (p <= report["alpha"]):
        raise ValueError("decision inconsistent with p_value and alpha")
    w = np.asarray(report["weights"])
    if abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights do not sum to 1")
    if "pair_mvd_sq" in report:
        pair = np.asarray(report["pair_mvd_sq"])
        if not np.array_equal(pair, pair.T) or np.any(np.diag(pair) != 0):
            raise ValueError("pair matrix must be symmetric with zero diagonal")
        k = len(w)
        total = sum(w[l] * pair[j, l] for j in range(k) for l in range(k) if l != j)
        if not math.isclose(total, stat, rel_tol=1e-10, abs_tol=1e-15):
            raise ValueError("statistic does not match its pair decomposition")


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    threads = resolve_threads(args.threads)
    grid = make_equispaced_grid(args.grid_points)
    data_seed = derived_seed(args.seed, 0)
    perm_seed = derived_seed(args.seed, 1)
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    reports = []
    for model in args.model:
        if model not in (1, 2, 3):
            raise DataError(f"invalid model id {model}; expected 1, 2 or 3")
        for n in args.n:
            spec = ModelSpec(
                model, (n, n, n), grid, data_seed, args.exp_param, args.gaussian_noise
            )
            if args.emit_data:
                out_dir = Path(args.emit_data)
                out_dir.mkdir(parents=True, exist_ok=True)
                first = replace(spec, seed=derived_seed(spec.seed, 0))
                for j, s in enumerate(generate(first), start=1):
                    write_curves_csv(out_dir / f"model{model}_n{n}_group{j}.csv", s)
            rep = monte_carlo(
                spec,
                args.replications,
                PermutationPlan(args.permutations, perm_seed),
                alpha=args.alpha,
                methods=methods,
                gamma=args.kernel_gamma,
                n_jobs=threads,
                spectral_draws=args.n_draws,
            )
            log.info(
                "model %d n=%d: %s (%.1fs)", model, n, rep.per_method, rep.wall_time
            )
            reports.append(rep)
    if args.format == "csv":
        _emit(table_csv(reports), args.out)
    elif len(reports) == 1:
        _emit(_dump(reports[0].to_dict()), args.out)
    else:
        _emit(_dump({"reports": [r.to_dict() for r in reports]}), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- nulldist


def cmd_nulldist(args) -> int:
    samples = load_groups(args.files)
    sizes = [s.size for s in samples]
    weights = resolve_weights(args.weights, sizes)
    threads = resolve_threads(args.threads)
    gram = build_gram(samples, KernelSpec(gamma=args.kernel_gamma), n_jobs=threads)
    levels = args.quantiles
    if any(not 0 < q < 1 for q in levels):
        raise DataError("--quantiles must lie in (0, 1)")
    spectrum = estimate_spectrum(gram, args.truncation)
    draws = sample_null(spectrum, gram.k, args.n_draws, args.seed, n_jobs=threads)
    stat = mmvd_statistic(gram, weights).value
    crit = critical_value(draws, args.alpha)
    scaled = gram.n * stat
    if args.spectrum_out:
        write_matrix_csv(args.spectrum_out, spectrum.eigenvalues[:, None])
    report = {
        "eigenvalues": spectrum.eigenvalues.tolist(),
        "truncation": spectrum.truncation,
        "rho": list(spectrum.rho),
        "quantile_levels": list(levels),
        "quantiles": quantiles(draws, levels),
        "alpha": args.alpha,
        "critical_value": crit,
        "statistic": stat,
        "n_times_statistic": scaled,
        "reject": bool(scaled > crit),
        "n_draws": args.n_draws,
        "seed": args.seed,
        "n_sizes": sizes,
        "gamma": args.kernel_gamma,
    }
    if args.format == "json":
        _emit(_dump(report), args.out)
    else:
        flat = {k: v for k, v in report.items() if k != "eigenvalues"}
        _emit(_kv_csv(flat), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mmvd", description="Multiple maximum variance discrepancy homogeneity test"
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, permutations: int | None) -> None:
        sp.add_argument("--kernel-gamma", type=float, default=0.5)
        sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        if permutations is not None:
            sp.add_argument("--permutations", type=int, default=permutations)

    t = sub.add_parser("test", help="permutation test on CSV groups")
    t.add_argument("files", nargs="+", help="one CSV per group")
    t.add_argument("--weights", default="proportional")
    t.add_argument("--statistic", choices=("mmvd", "gmmd"), default="mmvd")
    t.add_argument("--gram-out", default=None, help="dump the pooled Gram matrix as CSV")
    common(t, 999)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="Monte Carlo size/power for Models 1-3")
    s.add_argument("--model", type=_int_list, default=[1])
    s.add_argument("--n", type=_int_list, default=[100])
    s.add_argument("--replications", type=int, default=200)
    s.add_argument("--exp-param", choices=("mean", "rate"), default="mean")
    s.add_argument("--gaussian-noise", choices=("brownian", "white"), default="brownian")
    s.add_argument("--grid-points", type=int, default=21)
    s.add_argument("--methods", default="mmvd,gmmd", help="subset of mmvd,gmmd,spectral")
    s.add_argument("--n-draws", type=int, default=10000, help="null draws for 'spectral'")
    s.add_argument("--emit-data", default=None, metavar="DIR",
                   help="also write replication 0's groups as CSV files into DIR")
    common(s, 199)
    s.set_defaults(func=cmd_simulate)

    nd = sub.add_parser("nulldist", help="spectral approximation of the null law")
    nd.add_argument("files", nargs="+", help="one CSV per group")
    nd.add_argument("--weights", default="proportional")
    nd.add_argument("--quantiles", type=_float_list, default=[0.90, 0.95, 0.99])
    nd.add_argument("--n-draws", type=int, default=20000)
    nd.add_argument("--truncation", type=int, default=None,
                    help="number of eigenvalues kept (default: 99.9%% of the trace; 0 = all)")
    nd.add_argument("--spectrum-out", default=None, help="eigenvalues as CSV, one per line")
    common(nd, None)
    nd.set_defaults(func=cmd_nulldist)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    if hasattr(args, "replications") and args.replications < 1:
        parser.error("--replications must be >= 1")
    if getattr(args, "permutations", 1) < 1:
        parser.error("--permutations must be >= 1")
    if not 0 < args.alpha < 1:
        parser.error("--alpha must lie in (0, 1)")
    if args.kernel_gamma <= 0:
        parser.error("--kernel-gamma must be positive")
    try:
        return args.func(args)
    except NumericalConsistencyError as e:
        print(f"mmvd: internal numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError) as e:
        print(f"mmvd: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
