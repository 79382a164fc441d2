"""End-to-end run orchestration: cohort to validated feature matrices,
tuned models under both validation schemes, statistical comparisons,
attribution rankings, agreement matrices, dependence data, and a
reproducible on-disk report bundle.

Bundles contain no timestamps; a manifest hashes every emitted file, so a
rerun with the same config and seed is byte-identical at any worker count.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .consistency import agreement_matrix
from .domain import Cohort, validate_cohort
from .errors import DataError, SchemaError, StageError
from .evalharness import (
    HyperSearchConfig,
    SplitPlan,
    evaluate_holdout,
    evaluate_loso,
    failure_case_scan,
    hyper_search,
)
from .featureng import FeatureMatrix, build_feature_matrix
from .models import TrainedModel, fit_model
from .preprocess import ResamplePlan, apply_preprocessor, apply_resample, fit_preprocessor
from .stats import anova_oneway, bartlett, compare_pipelines, tukey_hsd
from .synthcohort import SyntheticCohortSpec, generate_cohort
from .util import derive_seed, sha256_bytes, stable_json
from .xai import (
    LimeConfig,
    all_rankings,
    dependence_data,
    shap_main_effects_matrix,
)

log = logging.getLogger(__name__)

ARTIFACT_SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    variant: str = "without_body"  # "with_body" | "without_body" | "both"
    families: tuple = ("forest", "gbdt", "lasso_logreg")
    resample_modes: tuple = ("none",)
    train_fraction: float = 0.70
    holdout_repeats: int = 10
    min_subject_weeks: int = 26
    search_rounds: int = 60
    inner_folds: int = 10
    search_strategy: str = "seeded_random"
    retune_per_fold: bool = True
    run_loso: bool = True
    lime_samples: int = 5000
    mda_repeats: int = 10
    trend_features: tuple = ("BMI", "MMSE", "Vegetables")
    agreement_ks: tuple = (1, 3, 5)
    seed: int = 42
    workers: int = 1
    synth: dict = field(default_factory=dict)  # SyntheticCohortSpec overrides

    def variants(self) -> tuple:
        if self.variant == "both":
            return ("without_body", "with_body")
        if self.variant not in ("with_body", "without_body"):
            raise DataError(f"unknown dataset variant {self.variant!r}")
        return (self.variant,)

    def split_plan(self, kind: str) -> SplitPlan:
        return SplitPlan(
            kind=kind,
            train_fraction=self.train_fraction,
            repeats=self.holdout_repeats,
            min_subject_weeks=self.min_subject_weeks,
            seed=derive_seed(self.seed, "split", kind),
        )

    def search_config(self) -> HyperSearchConfig:
        return HyperSearchConfig(
            rounds=self.search_rounds,
            inner_folds=self.inner_folds,
            strategy=self.search_strategy,
            retune_per_fold=self.retune_per_fold,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        # worker count is an execution detail: results are identical at any
        # level, so it stays out of the config identity and the manifest
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        kwargs = dict(d)
        for key in ("families", "resample_modes", "trend_features", "agreement_ks"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class ReportBundle:
    directory: Path
    files: dict  # relative path -> sha256

    @property
    def manifest_path(self) -> Path:
        return self.directory / "manifest.json"


def persist_model(m: TrainedModel, path, resample_plan: ResamplePlan | None = None) -> None:
    """Versioned, checksummed JSON model artifact."""
    payload = m.to_dict()
    if m.preprocess is not None:
        payload["preprocess"] = m.preprocess.to_dict()
    if resample_plan is not None:
        payload["resample"] = resample_plan.to_dict()
    body = stable_json(payload)
    artifact = {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "checksum": sha256_bytes(body.encode("utf-8")),
        "model": payload,
    }
    Path(path).write_text(stable_json(artifact) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    """Inverse of persist_model; bit-exact predictions are guaranteed by
    the round-tripping float encoding."""
    try:
        artifact = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError) as exc:
        raise SchemaError(f"unreadable model artifact {path}: {exc}")
    if not isinstance(artifact, dict) or "schema_version" not in artifact:
        raise SchemaError(f"{path} is not a model artifact")
    if artifact["schema_version"] != ARTIFACT_SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported artifact schema version {artifact['schema_version']} "
            f"(supported: {ARTIFACT_SCHEMA_VERSION})"
        )
    payload = artifact["model"]
    if sha256_bytes(stable_json(payload).encode("utf-8")) != artifact["checksum"]:
        raise SchemaError(f"checksum mismatch in {path}")
    model = TrainedModel.from_dict(payload)
    if "preprocess" in payload:
        from .preprocess import PreprocessPlan

        model.preprocess = PreprocessPlan.from_dict(payload["preprocess"])
    return model


def _stage(stage_name):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(stage_name, exc) from exc
            return False

    return _StageContext()


def _imbalance_comparison(reports_by_mode: dict) -> dict:
    """Bartlett -> ANOVA -> Tukey across resample modes, per metric."""
    out = {}
    modes = sorted(reports_by_mode)
    for metric in ("accuracy", "f1", "auc"):
        groups = [reports_by_mode[m].metric_values(metric) for m in modes]
        if any(len(g) < 2 for g in groups):
            continue
        entry = {"modes": modes}
        try:
            entry["bartlett"] = bartlett(groups).to_dict()
        except DataError as exc:
            entry["bartlett"] = {"error": str(exc)}
        anova = anova_oneway(groups)
        entry["anova"] = anova.to_dict()
        if anova.significant:
            entry["tukey"] = [t.to_dict() for t in tukey_hsd(groups)]
        out[metric] = entry
    return out


def _final_model(fm, family, resample_plan, cfg, seed):
    """Tune on the full matrix and fit the model used for explanations."""
    plan = fit_preprocessor(fm)
    X = apply_preprocessor(plan, fm)
    spec = hyper_search(
        family, X, fm.y, cfg.search_config(), resample_plan, derive_seed(seed, "final-search")
    )
    Xr, yr, wr = apply_resample(resample_plan, X, fm.y, derive_seed(seed, "final-resample"))
    model = fit_model(spec, Xr, yr, wr)
    model.preprocess = plan
    return model, plan, X


def run_pipeline(cfg: RunConfig, cohort: Cohort | None = None, out_dir=None) -> ReportBundle:
    """Execute ingest -> features -> validation -> search/train/evaluate ->
    statistics -> attribution -> agreement, writing the report bundle.

    `cohort` defaults to the seeded synthetic cohort; any stage failure is
    re-raised with a stage tag.
    """
    out_dir = Path(out_dir if out_dir is not None else "nutriscreen-report")
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _BundleWriter(out_dir)

    with _stage("cohort"):
        if cohort is None:
            cohort = generate_cohort(
                SyntheticCohortSpec(**cfg.synth), derive_seed(cfg.seed, "cohort")
            )
        validation = validate_cohort(cohort)
        writer.write_json(
            "cohort_validation.json",
            {
                "periods": [
                    {
                        "period_id": p.period_id,
                        "n_subjects": p.n_subjects,
                        "observed_weeks": p.observed_weeks,
                        "invalid_nutritional_pct": p.invalid_nutritional_pct,
                        "missing_body_pct": p.missing_body_pct,
                    }
                    for p in validation.periods
                ],
                "flagged_periods": validation.flagged_periods,
                "structural_errors": validation.structural_errors,
                "row_counts": validation.row_counts,
            },
        )

    results = {}
    for variant in cfg.variants():
        with _stage(f"features:{variant}"):
            fm = build_feature_matrix(cohort, with_body=variant == "with_body")
            writer.write_matrix(variant, fm)
        results[variant] = _run_variant(cfg, fm, variant, writer)

    with _stage("report"):
        summary = {
            "tool_version": __version__,
            "config": cfg.to_dict(),
            "variants": results,
        }
        writer.write_json("report.json", summary)
        manifest = {
            "tool_version": __version__,
            "config_hash": sha256_bytes(stable_json(cfg.to_dict()).encode("utf-8")),
            "config": cfg.to_dict(),
            "files": writer.hashes,
        }
        (out_dir / "manifest.json").write_text(
            stable_json(manifest) + "\n", encoding="utf-8"
        )
    return ReportBundle(directory=out_dir, files=writer.hashes)


def _run_variant(cfg: RunConfig, fm: FeatureMatrix, variant: str, writer) -> dict:
    search_cfg = cfg.search_config()
    seed = derive_seed(cfg.seed, variant)
    summary = {"n_rows": int(fm.X.shape[0]), "n_features": int(fm.X.shape[1])}

    holdout_by_family = {}
    loso_by_family = {}
    with _stage(f"evaluate:{variant}"):
        for family in cfg.families:
            by_mode = {}
            for mode in cfg.resample_modes:
                rp = ResamplePlan(mode=mode)
                rep = evaluate_holdout(
                    fm, family, rp, cfg.split_plan("holdout"), search_cfg,
                    seed=derive_seed(seed, "holdout", family, mode),
                    workers=cfg.workers,
                )
                by_mode[mode] = rep
            holdout_by_family[family] = by_mode
            if cfg.run_loso:
                mode = cfg.resample_modes[0]
                loso_by_family[family] = evaluate_loso(
                    fm, family, ResamplePlan(mode=mode), cfg.split_plan("loso"),
                    search_cfg, seed=derive_seed(seed, "loso", family, mode),
                    workers=cfg.workers,
                )

    with _stage(f"stats:{variant}"):
        stats_block = {}
        for family in cfg.families:
            entry = {}
            if len(cfg.resample_modes) >= 2:
                entry["imbalance_comparison"] = _imbalance_comparison(
                    holdout_by_family[family]
                )
            if cfg.run_loso:
                hold_acc = holdout_by_family[family][cfg.resample_modes[0]].metric_values("accuracy")
                loso_acc = loso_by_family[family].metric_values("accuracy")
                if len(hold_acc) >= 3 and len(loso_acc) >= 3:
                    entry["holdout_vs_loso"] = compare_pipelines(
                        hold_acc, loso_acc
                    ).to_dict()
            stats_block[family] = entry

    eval_block = {}
    run_csv_lines = ["family,resample_mode,run,accuracy,f1,auc"]
    for family in cfg.families:
        eval_block[family] = {
            "holdout": {
                mode: rep.to_dict() for mode, rep in holdout_by_family[family].items()
            }
        }
        for mode, rep in holdout_by_family[family].items():
            for r, metrics in enumerate(rep.runs):
                cells = [
                    "" if metrics[k] is None else repr(metrics[k])
                    for k in ("accuracy", "f1", "auc")
                ]
                run_csv_lines.append(f"{family},{mode},{r}," + ",".join(cells))
        if cfg.run_loso:
            eval_block[family]["loso"] = loso_by_family[family].to_dict()
            eval_block[family]["failure_cases"] = failure_case_scan(
                loso_by_family[family]
            )
    writer.write_json(f"{variant}/evaluation.json", {"families": eval_block, "stats": stats_block})
    writer.write_text(f"{variant}/holdout_runs.csv", "\n".join(run_csv_lines) + "\n")

    with _stage(f"explain:{variant}"):
        lime_cfg = LimeConfig(
            n_samples=cfg.lime_samples, seed=derive_seed(seed, "lime")
        )
        rankings_out = []
        agreement_csv_parts = []
        trends = {}
        for family in cfg.families:
            rp = ResamplePlan(mode=cfg.resample_modes[0])
            model, plan, X_enc = _final_model(fm, family, rp, cfg, derive_seed(seed, family))
            groups = plan.encoded_groups
            rankings = all_rankings(
                model, X_enc, fm.y, groups=groups, lime_cfg=lime_cfg,
                mda_repeats=cfg.mda_repeats, seed=derive_seed(seed, "xai", family),
                workers=cfg.workers,
            )
            for method, ranking in rankings.items():
                rankings_out.append(
                    {"model": family, "method": method, **ranking.to_dict()}
                )
            if model.is_tree_based:
                matrix = agreement_matrix(
                    rankings, ks=cfg.agreement_ks, model=family
                )
                agreement_csv_parts.append((family, matrix))
                main_fx = shap_main_effects_matrix(model, X_enc)
                for feat in cfg.trend_features:
                    if feat not in fm.columns:
                        continue
                    raw = fm.X[:, fm.columns.index(feat)]
                    series = dependence_data(
                        model, X_enc, feat, method="SHAP", groups=groups,
                        x_values=raw, main_effects=main_fx,
                    )
                    trends.setdefault(family, {})[feat] = series
        rankings_payload = [
            {"model": r["model"], "method": r["method"], "features": [e[0] for e in r["entries"]], "scores": [e[1] for e in r["entries"]]}
            for r in rankings_out
        ]
        writer.write_json(f"{variant}/rankings.json", rankings_payload)
        ranking_lines = ["model,method,rank,feature,score"]
        for r in rankings_out:
            for rank, (feature, score) in enumerate(r["entries"], start=1):
                ranking_lines.append(
                    f"{r['model']},{r['method']},{rank},{feature},{score!r}"
                )
        writer.write_text(f"{variant}/rankings.csv", "\n".join(ranking_lines) + "\n")
        for family, matrix in agreement_csv_parts:
            writer.write_text(f"{variant}/agreement_{family}.csv", matrix.to_csv())
            writer.write_json(
                f"{variant}/agreement_{family}_summary.json", matrix.summary()
            )
        for family, series_by_feat in trends.items():
            for feat, series in series_by_feat.items():
                safe = feat.lower().replace(" ", "_")
                rows = "\n".join(f"{a!r},{b!r}" for a, b in series.to_rows())
                writer.write_text(
                    f"{variant}/trend_{family}_{safe}.csv",
                    f"{feat},main_effect\n{rows}\n",
                )

    agg = {}
    for family in cfg.families:
        agg[family] = {
            "holdout": {
                mode: rep.aggregates()
                for mode, rep in holdout_by_family[family].items()
            },
        }
        if cfg.run_loso:
            agg[family]["loso"] = loso_by_family[family].aggregates()
            agg[family]["n_fail"] = loso_by_family[family].n_fail
    summary["aggregates"] = agg
    return summary


class _BundleWriter:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.hashes = {}

    def _record(self, rel: str, data: bytes):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.hashes[rel] = sha256_bytes(data)

    def write_json(self, rel: str, obj) -> None:
        self._record(rel, (stable_json(obj) + "\n").encode("utf-8"))

    def write_text(self, rel: str, text: str) -> None:
        self._record(rel, text.encode("utf-8"))

    def write_matrix(self, variant: str, fm: FeatureMatrix) -> None:
        import io

        csv_path = self.root / f"{variant}/features.csv"
        manifest_path = self.root / f"{variant}/features.manifest.json"
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        fm.to_csv(csv_path, manifest_path)
        for p in (csv_path, manifest_path):
            rel = str(p.relative_to(self.root))
            self.hashes[rel] = sha256_bytes(p.read_bytes())
