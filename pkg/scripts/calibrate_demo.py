"""Measure the demo project in VERIFY mode and record its baseline envelope.

Runs the original program and the head-insertion variant 30 times each,
prints the speedup with its Mann-Whitney p-value and writes
demo/calibration.json, which the evaluator tests read.

    python3 scripts/calibrate_demo.py [--runs 30]
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from darwinian.config import load_config
from darwinian.evaluate import Evaluator, Mode
from darwinian.extract import GeneKind, extract
from darwinian.stats import Alternative, mann_whitney_u, median_ci

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "demo" / "darwin.json"))
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--out", default=str(ROOT / "demo" / "calibration.json"))
    args = ap.parse_args(argv)

    config = load_config(args.config)
    ex = extract(config.source_root, config.load_store(), config.site_ranking(), config.file_globs)
    cfg = config.eval_config()
    cfg.runs_verify = args.runs
    with tempfile.TemporaryDirectory() as tmp:
        cfg.workdir_root = Path(tmp)
        ev = Evaluator(ex, cfg)
        base = ev.measure_baseline()
        # switch the hot site (site 0, the head-insertion log) to LinkedBuffer
        variant = list(ex.schema.seed_genome)
        variant[ex.schema.gene_index(0, GeneKind.IMPL)] = 1
        fast = ev.evaluate(tuple(variant), Mode.VERIFY)
    if not fast.feasible:
        print(f"variant failed: {fast.stage} {fast.detail}", file=sys.stderr)
        return 1
    names = ("time", "memory", "cpu")
    envelope = {}
    for i, name in enumerate(names):
        col = base.column(i)
        ci = median_ci(col)
        envelope[name] = {"median": base.objectives[i], "min": min(col), "max": max(col), "ci": [ci.lo, ci.hi]}
    speedup = 1 - fast.objectives[0] / base.objectives[0]
    _, p = mann_whitney_u(fast.measurement.column(0), base.column(0), Alternative.LESS)
    result = {
        "runs": args.runs,
        "baseline": envelope,
        "hot_site_variant": {"genome": variant, "objectives": list(fast.objectives), "time_reduction": speedup, "p_time": p},
    }
    Path(args.out).write_text(json.dumps(result, indent=2) + "\n")
    print(f"baseline median time {base.objectives[0]:.4f} s, variant {fast.objectives[0]:.4f} s")
    print(f"time reduction {100 * speedup:.1f}% (one-sided p = {p:.2e}); wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
