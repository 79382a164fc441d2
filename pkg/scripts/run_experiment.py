#!/usr/bin/env python3
"""Run the full screening experiment on a synthetic cohort and print a
compact summary of what lands in the report bundle.

Example:

    python scripts/run_experiment.py --out runs/demo --seed 42 --quick
"""
import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from nutriscreen.pipeline import RunConfig, run_pipeline


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/experiment")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--quick", action="store_true",
        help="small search budget and cohort for a fast smoke run",
    )
    args = parser.parse_args()

    if args.quick:
        cfg = RunConfig(
            variant="both",
            families=("forest", "gbdt", "lasso_logreg"),
            holdout_repeats=3,
            search_rounds=3,
            inner_folds=3,
            min_subject_weeks=10,
            lime_samples=800,
            mda_repeats=3,
            seed=args.seed,
            workers=args.workers,
            synth={"n_subjects": 16, "period_weeks": (10, 12)},
        )
    else:
        cfg = RunConfig(
            variant="both",
            holdout_repeats=10,
            search_rounds=8,
            inner_folds=3,
            seed=args.seed,
            workers=args.workers,
        )

    started = time.perf_counter()
    bundle = run_pipeline(cfg, out_dir=args.out)
    elapsed = time.perf_counter() - started

    report = json.loads((bundle.directory / "report.json").read_text())
    print(f"finished in {elapsed:.0f}s -> {bundle.directory} ({len(bundle.files)} files)")
    for variant, block in report["variants"].items():
        print(f"\n{variant}: {block['n_rows']} rows x {block['n_features']} features")
        for family, agg in block["aggregates"].items():
            hold = agg["holdout"]["none"]["accuracy"]
            line = f"  {family:13s} hold-out acc median {hold['median']:.3f} (IQR {hold['iqr']:.3f})"
            if "loso" in agg:
                line += f"  per-subject median {agg['loso']['accuracy']['median']:.3f}  failures {agg['n_fail']}"
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
