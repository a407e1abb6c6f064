"""Size of the spectrally calibrated test on Model 1, next to the permutation test.

    python3 scripts/spectral_size.py --n 100 --replications 200
"""

from __future__ import annotations

import argparse
import json
import sys

from mmvdtest.permtest import PermutationPlan
from mmvdtest.simgen import ModelSpec, derived_seed, monte_carlo


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--replications", type=int, default=200)
    p.add_argument("--n-draws", type=int, default=10000)
    p.add_argument("--permutations", type=int, default=199)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args(argv)

    spec = ModelSpec(1, (args.n,) * 3, seed=derived_seed(args.seed, 0))
    rep = monte_carlo(
        spec,
        args.replications,
        PermutationPlan(args.permutations, derived_seed(args.seed, 1)),
        alpha=args.alpha,
        methods=("spectral", "mmvd"),
        n_jobs=args.jobs,
        spectral_draws=args.n_draws,
    )
    print(json.dumps(rep.to_dict(include_timing=True), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
