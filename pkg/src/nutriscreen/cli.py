"""Command-line surface.

Subcommands: synth, ingest, train, evaluate, explain, agree, report.
Configuration comes from an optional key = value file plus flag overrides
(flags win). Exit codes: 0 success, 1 usage error, 2 data error,
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from . import __version__
from .errors import DataError, NutriscreenError, StageError, UsageError

log = logging.getLogger("nutriscreen")


def _parse_config_file(path) -> dict:
    """Flat key = value file; values are JSON fragments when parseable."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value.strip("\"'")
    return out


def _build_run_config(args) -> "RunConfig":
    from .pipeline import RunConfig

    base = {}
    if getattr(args, "config", None):
        base = _parse_config_file(args.config)
    known = {f.name for f in dataclass_fields(RunConfig)}
    unknown = set(base) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    overrides = {
        "variant": args.variant,
        "seed": args.seed,
        "workers": args.workers,
        "families": tuple(args.families.split(",")) if getattr(args, "families", None) else None,
        "resample_modes": tuple(args.resample.split(",")) if getattr(args, "resample", None) else None,
        "search_rounds": getattr(args, "rounds", None),
        "inner_folds": getattr(args, "inner_folds", None),
        "holdout_repeats": getattr(args, "repeats", None),
        "lime_samples": getattr(args, "lime_samples", None),
    }
    merged = dict(base)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    if "NUTRISCREEN_WORKERS" in os.environ:
        merged["workers"] = int(os.environ["NUTRISCREEN_WORKERS"])
    return RunConfig.from_dict(merged)


def _out_dir(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get("NUTRISCREEN_OUT_DIR")
    if out is None:
        raise UsageError("an output location is required (--out or NUTRISCREEN_OUT_DIR)")
    return Path(out)


def cmd_synth(args) -> int:
    from .domain import write_cohort
    from .synthcohort import SyntheticCohortSpec, generate_cohort
    from .util import stable_json

    out = _out_dir(args)
    spec_kwargs = {}
    if args.subjects:
        spec_kwargs["n_subjects"] = args.subjects
    spec = SyntheticCohortSpec(**spec_kwargs)
    cohort = generate_cohort(spec, args.seed)
    write_cohort(cohort, out)
    payload = {k: v for k, v in spec.__dict__.items()}
    payload["first_period_start"] = spec.first_period_start.isoformat()
    payload["seed"] = args.seed
    (out / "synth_spec.json").write_text(stable_json(payload) + "\n", encoding="utf-8")
    print(f"wrote synthetic cohort tables to {out}")
    return 0


def cmd_ingest(args) -> int:
    from .domain import ingest_cohort, validate_cohort

    cohort = ingest_cohort(args.data)
    report = validate_cohort(cohort, min_valid_days=args.min_valid_days)
    print("row counts:", report.row_counts)
    for p in report.periods:
        body = "N.A." if p.missing_body_pct is None else f"{p.missing_body_pct:.1f}%"
        print(
            f"period {p.period_id}: subjects={p.n_subjects} weeks={p.observed_weeks} "
            f"invalid_nutrition={p.invalid_nutritional_pct:.1f}% missing_body={body}"
        )
    if report.flagged_periods:
        print("flagged for exclusion:", ", ".join(report.flagged_periods))
    for err in report.structural_errors:
        print("structural:", err)
    return 0


def cmd_train(args) -> int:
    from .domain import ingest_cohort
    from .evalharness import HyperSearchConfig, hyper_search
    from .featureng import build_feature_matrix
    from .models import fit_model
    from .pipeline import persist_model
    from .preprocess import ResamplePlan, apply_preprocessor, apply_resample, fit_preprocessor
    from .util import derive_seed

    cohort = ingest_cohort(args.data)
    fm = build_feature_matrix(cohort, with_body=args.variant == "with_body")
    plan = fit_preprocessor(fm)
    X = apply_preprocessor(plan, fm)
    rp = ResamplePlan(mode=args.resample or "none")
    cfg = HyperSearchConfig(rounds=args.rounds or 60, inner_folds=args.inner_folds or 10)
    spec = hyper_search(args.family, X, fm.y, cfg, rp, derive_seed(args.seed, "train"))
    Xr, yr, wr = apply_resample(rp, X, fm.y, derive_seed(args.seed, "resample"))
    model = fit_model(spec, Xr, yr, wr)
    model.preprocess = plan
    persist_model(model, args.out, resample_plan=rp)
    print(f"trained {args.family} ({spec.params}) -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .domain import ingest_cohort
    from .evalharness import evaluate_holdout, evaluate_loso, failure_case_scan
    from .featureng import build_feature_matrix
    from .pipeline import RunConfig
    from .preprocess import ResamplePlan
    from .util import derive_seed, stable_json

    cohort = ingest_cohort(args.data)
    cfg = _build_run_config(args)
    fm = build_feature_matrix(cohort, with_body=args.variant == "with_body")
    rp = ResamplePlan(mode=(args.resample or "none").split(",")[0])
    result = {}
    hold = evaluate_holdout(
        fm, args.family, rp, cfg.split_plan("holdout"), cfg.search_config(),
        seed=derive_seed(cfg.seed, "holdout"), workers=cfg.workers,
    )
    result["holdout"] = hold.to_dict()
    if not args.no_loso:
        loso = evaluate_loso(
            fm, args.family, rp, cfg.split_plan("loso"), cfg.search_config(),
            seed=derive_seed(cfg.seed, "loso"), workers=cfg.workers,
        )
        result["loso"] = loso.to_dict()
        result["failure_cases"] = failure_case_scan(loso)
    text = stable_json(result) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote evaluation to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_explain(args) -> int:
    from .consistency import agreement_matrix
    from .domain import ingest_cohort
    from .featureng import build_feature_matrix
    from .pipeline import load_model
    from .preprocess import apply_preprocessor
    from .util import derive_seed, stable_json
    from .xai import LimeConfig, all_rankings

    model = load_model(args.model)
    if model.preprocess is None:
        raise DataError("model artifact carries no preprocessing plan")
    cohort = ingest_cohort(args.data)
    fm = build_feature_matrix(cohort, with_body=args.variant == "with_body")
    X = apply_preprocessor(model.preprocess, fm)
    rankings = all_rankings(
        model, X, fm.y, groups=model.preprocess.encoded_groups,
        lime_cfg=LimeConfig(n_samples=args.lime_samples or 5000, seed=derive_seed(args.seed, "lime")),
        seed=args.seed, workers=args.workers or 1,
    )
    out = Path(args.out or "explain-out")
    out.mkdir(parents=True, exist_ok=True)
    payload = [
        {"model": model.spec.family, "method": m, "features": r.features,
         "scores": [s for _, s in r.entries]}
        for m, r in rankings.items()
    ]
    (out / "rankings.json").write_text(stable_json(payload) + "\n", encoding="utf-8")
    if len(rankings) >= 2:
        matrix = agreement_matrix(rankings, model=model.spec.family)
        (out / "agreement.csv").write_text(matrix.to_csv(), encoding="utf-8")
    print(f"wrote rankings for {len(rankings)} methods to {out}")
    return 0


def cmd_agree(args) -> int:
    from .consistency import agreement_from_file

    ks = tuple(int(k) for k in (args.ks or "1,3,5").split(","))
    matrices = agreement_from_file(args.rankings, ks=ks)
    csv_text = "".join(
        m.to_csv() if i == 0 else "".join(m.to_csv().splitlines(keepends=True)[1:])
        for i, m in enumerate(matrices)
    )
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote agreement matrix to {args.out}")
    else:
        print(csv_text, end="")
    return 0


def cmd_report(args) -> int:
    from .domain import ingest_cohort
    from .pipeline import run_pipeline

    cfg = _build_run_config(args)
    cohort = ingest_cohort(args.data) if args.data else None
    bundle = run_pipeline(cfg, cohort=cohort, out_dir=_out_dir(args))
    print(f"report bundle at {bundle.directory} ({len(bundle.files)} files)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nutriscreen",
        description="Explainable weekly malnutrition-risk screening pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--workers", type=int, default=None)
        if out_required:
            p.add_argument("--out", required=False, help="output path")

    p = sub.add_parser("synth", help="generate a synthetic cohort as CSV tables")
    common(p, out_required=True)
    p.add_argument("--subjects", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("ingest", help="ingest cohort tables and print the validation report")
    p.add_argument("--data", required=True)
    p.add_argument("--min-valid-days", type=int, default=5)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train", help="tune and fit one model, persist the artifact")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=("with_body", "without_body"), default="without_body")
    p.add_argument("--family", required=True)
    p.add_argument("--resample", default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--inner-folds", dest="inner_folds", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="two-stage evaluation of one family")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=("with_body", "without_body"), default="without_body")
    p.add_argument("--family", required=True)
    p.add_argument("--resample", default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--inner-folds", dest="inner_folds", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--no-loso", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("explain", help="attribution rankings for a persisted model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=("with_body", "without_body"), default="without_body")
    p.add_argument("--lime-samples", dest="lime_samples", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("agree", help="agreement matrix for externally produced rankings")
    p.add_argument("--rankings", required=True)
    p.add_argument("--ks", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_agree)

    p = sub.add_parser("report", help="full pipeline run into a report bundle")
    common(p, out_required=True)
    p.add_argument("--data", default=None, help="cohort directory (default: synthetic)")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--variant", choices=("with_body", "without_body", "both"), default=None)
    p.add_argument("--families", default=None, help="comma-separated model families")
    p.add_argument("--resample", default=None, help="comma-separated resample modes")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--inner-folds", dest="inner_folds", type=int, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--lime-samples", dest="lime_samples", type=int, default=None)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version, 2 for usage problems
        return 0 if exc.code == 0 else 1
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.original, UsageError):
            return 1
        return 2 if isinstance(exc.original, DataError) else 3
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NutriscreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
