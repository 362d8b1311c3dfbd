"""Compare the search's fronts with brute force on generated toy schemas.

For every toy the true front comes from enumerating all variants of a
synthetic fitness landscape; the script prints how many searches recover it
exactly and how large the true fronts were.  Larger ``--spread`` values
decorrelate the three objectives and grow the fronts.

    python3 scripts/toy_pareto_study.py --toys 25 --spread 3 6 10
"""

import argparse
import sys
import tempfile
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from darwinian.search import SearchParams, nsga2_run  # noqa: E402
from toys import SyntheticFitness, make_toy_project  # noqa: E402


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--toys", type=int, default=25)
    ap.add_argument("--first-seed", type=int, default=1000)
    ap.add_argument("--spread", type=float, nargs="+", default=[3.0])
    ap.add_argument("--pop", type=int, default=30)
    ap.add_argument("--budget", type=int, default=900)
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        schemas = [
            make_toy_project(Path(tmp) / f"toy{i}", args.first_seed + i)[1] for i in range(args.toys)
        ]
        for spread in args.spread:
            start = time.perf_counter()
            exact = 0
            misses = []
            sizes = []
            for i, schema in enumerate(schemas):
                seed = args.first_seed + i
                fit = SyntheticFitness(schema, seed, spread=spread)
                res = nsga2_run(schema, fit, SearchParams(args.pop, args.budget, rng_seed=seed))
                truth = fit.brute_force_front()
                sizes.append(len(truth))
                if {ind.genome for ind in res.front} == truth:
                    exact += 1
                else:
                    misses.append((seed, len(truth), len(res.front)))
            took = time.perf_counter() - start
            print(f"spread {spread:g}: {exact}/{len(schemas)} exact in {took:.1f} s; true front sizes {min(sizes)}..{max(sizes)}")
            for seed, true_n, got_n in misses:
                print(f"  seed {seed}: true front {true_n}, search returned {got_n}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
