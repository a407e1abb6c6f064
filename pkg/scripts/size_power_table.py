"""Monte Carlo size/power table for Models 1-3 (MMVD vs GMMD).

Default is the CI scale (200 replications, n in {25, 50, 100}); ``--full``
runs 2000 replications over n in {25, 50, 100, 200, 300}. Writes a CSV table
and, with ``--json``, the per-run reports.

    python3 scripts/size_power_table.py --out table.csv
    python3 scripts/size_power_table.py --full --jobs 8 --out table_full.csv
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from mmvdtest.permtest import PermutationPlan
from mmvdtest.simgen import ModelSpec, derived_seed, monte_carlo, table_csv

log = logging.getLogger("size_power")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--full", action="store_true", help="2000 replications, n up to 300")
    p.add_argument("--models", default="1,2,3")
    p.add_argument("--n", default=None, help="comma list of per-group sizes")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--permutations", type=int, default=199)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--gaussian-noise", choices=("brownian", "white"), default="brownian")
    p.add_argument("--exp-param", choices=("mean", "rate"), default="mean")
    p.add_argument("--out", default=None)
    p.add_argument("--json", default=None, help="also write all reports as JSON")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    sizes = [int(x) for x in args.n.split(",")] if args.n else (
        [25, 50, 100, 200, 300] if args.full else [25, 50, 100]
    )
    reps = args.replications or (2000 if args.full else 200)
    plan = PermutationPlan(args.permutations, derived_seed(args.seed, 1))
    reports = []
    for model in (int(m) for m in args.models.split(",")):
        for n in sizes:
            spec = ModelSpec(
                model, (n, n, n), seed=derived_seed(args.seed, 0),
                exp_param=args.exp_param, gaussian_noise=args.gaussian_noise,
            )
            rep = monte_carlo(spec, reps, plan, alpha=args.alpha, n_jobs=args.jobs)
            log.info("model %d n=%d %s %.1fs", model, n, rep.per_method, rep.wall_time)
            reports.append(rep)

    text = table_csv(reports)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.json:
        Path(args.json).write_text(
            json.dumps([r.to_dict(include_timing=True) for r in reports], indent=2)
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
