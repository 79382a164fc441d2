"""Two-stage validation: repeated stratified hold-out and leave-one-subject-
out with an eligibility floor, plus hyperparameter search and metrics.

The whole evaluation is a pure function of (FeatureMatrix, config, seed):
preprocessors and resamplers are fitted on training indices only, and every
random draw flows from the root seed through named derivation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, UsageError
from .featureng import FeatureMatrix
from .models import ModelSpec, fit_model, predict_proba
from .preprocess import ResamplePlan, apply_preprocessor, apply_resample, fit_preprocessor
from .util import derive_seed, parallel_map, rng_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitPlan:
    kind: str = "holdout"  # "holdout" | "loso"
    train_fraction: float = 0.70
    repeats: int = 10
    stratified: bool = True
    min_subject_weeks: int = 26
    seed: int = 0


@dataclass(frozen=True)
class HyperSearchConfig:
    rounds: int = 60
    inner_folds: int = 10
    strategy: str = "seeded_random"  # | "smbo"
    scoring: str = "auto"  # f1 when resample mode is none, accuracy otherwise
    retune_per_fold: bool = True

    def metric_for(self, resample_mode: str) -> str:
        if self.scoring != "auto":
            return self.scoring
        return "f1" if resample_mode == "none" else "accuracy"


SEARCH_SPACES = {
    "cart": {
        "max_depth": ("int", 2, 12),
        "min_samples_leaf": ("int", 1, 10),
    },
    "forest": {
        "n_trees": ("int", 40, 200),
        "max_depth": ("int", 4, 16),
        "min_samples_leaf": ("int", 1, 8),
    },
    "gbdt": {
        "n_rounds": ("int", 40, 250),
        "learning_rate": ("log", 0.02, 0.3),
        "max_depth": ("int", 2, 5),
        "reg_lambda": ("log", 1e-3, 10.0),
    },
    "rusboost": {
        "n_rounds": ("int", 20, 120),
        "max_depth": ("int", 1, 3),
    },
    "lasso_logreg": {
        "alpha": ("log", 1e-4, 1.0),
    },
    "knn": {
        "k": ("int", 1, 25),
    },
}


def sample_space(space: dict, rng: np.random.Generator) -> dict:
    params = {}
    for name, spec in space.items():
        kind = spec[0]
        if kind == "int":
            params[name] = int(rng.integers(spec[1], spec[2] + 1))
        elif kind == "log":
            params[name] = float(np.exp(rng.uniform(np.log(spec[1]), np.log(spec[2]))))
        elif kind == "choice":
            params[name] = spec[1][int(rng.integers(0, len(spec[1])))]
        else:
            raise UsageError(f"unknown search dimension kind {kind!r}")
    return params


@dataclass
class EvalReport:
    kind: str
    family: str
    resample_mode: str
    runs: list = field(default_factory=list)  # holdout: one metrics dict per repeat
    per_subject: dict = field(default_factory=dict)  # loso: sid -> metrics + label mix
    config: dict = field(default_factory=dict)

    @property
    def n_fail(self) -> int:
        return sum(1 for m in self.per_subject.values() if m["accuracy"] == 0.0)

    def metric_values(self, metric: str) -> list:
        if self.kind == "holdout":
            return [m[metric] for m in self.runs if m.get(metric) is not None]
        return [
            m[metric] for m in self.per_subject.values() if m.get(metric) is not None
        ]

    def aggregates(self) -> dict:
        out = {}
        for metric in ("accuracy", "f1", "auc"):
            vals = self.metric_values(metric)
            if not vals:
                continue
            arr = np.asarray(vals, dtype=np.float64)
            out[metric] = {
                "median": float(np.median(arr)),
                "iqr": float(np.percentile(arr, 75) - np.percentile(arr, 25)),
                "mean": float(arr.mean()),
            }
        return out

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "family": self.family,
            "resample_mode": self.resample_mode,
            "aggregates": self.aggregates(),
            "config": self.config,
        }
        if self.kind == "holdout":
            d["runs"] = self.runs
        else:
            d["per_subject"] = self.per_subject
            d["n_fail"] = self.n_fail
        return d


def holdout_splits(fm: FeatureMatrix, plan: SplitPlan) -> list:
    """`plan.repeats` stratified (train, test) index pairs.

    Per-class test counts follow the largest-remainder apportionment of the
    overall 30% test share, so class proportions stay within one sample of
    the global ratio.
    """
    y = fm.y
    n = len(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts.min() < 2:
        raise DataError("stratified hold-out needs at least 2 rows per class")
    test_total = int(round(n * (1.0 - plan.train_fraction)))
    exact = counts * (1.0 - plan.train_fraction)
    base = np.floor(exact).astype(np.int64)
    shortfall = test_total - int(base.sum())
    order = np.argsort(-(exact - base), kind="stable")
    take = base.copy()
    for i in range(shortfall):
        take[order[i % len(classes)]] += 1

    splits = []
    for r in range(plan.repeats):
        rng = rng_for(plan.seed, "holdout", r)
        test_parts, train_parts = [], []
        for c, t in zip(classes, take):
            idx = np.flatnonzero(y == c)
            perm = rng.permutation(idx)
            test_parts.append(perm[:t])
            train_parts.append(perm[t:])
        test = np.sort(np.concatenate(test_parts))
        train = np.sort(np.concatenate(train_parts))
        splits.append((train, test))
    return splits


def loso_splits(fm: FeatureMatrix, plan: SplitPlan) -> list:
    """One (subject, train, test) fold per eligible subject.

    Eligibility: at least `plan.min_subject_weeks` rows. Ineligible
    subjects never get a fold but their rows stay in every training set.
    """
    counts = fm.subject_row_counts()
    eligible = sorted(s for s, c in counts.items() if c >= plan.min_subject_weeks)
    if len(eligible) < 2:
        raise DataError("LOSO needs at least 2 eligible subjects")
    subjects = np.asarray(fm.subjects)
    folds = []
    for sid in eligible:
        test = np.flatnonzero(subjects == sid)
        train = np.flatnonzero(subjects != sid)
        folds.append((sid, train, test))
    return folds


def compute_metrics(y_true, p_pred) -> dict:
    """Accuracy/F1 at the 0.5 threshold (positive class = Risk) plus
    tie-corrected rank AUC; F1 and AUC are None for single-class truth."""
    y_true = np.asarray(y_true, dtype=np.int64)
    p_pred = np.asarray(p_pred, dtype=np.float64)
    if len(y_true) != len(p_pred):
        raise DataError("labels and predictions differ in length")
    if np.any((p_pred < 0) | (p_pred > 1)):
        raise DataError("probabilities outside [0, 1]")
    pred = (p_pred > 0.5).astype(np.int64)
    accuracy = float((pred == y_true).mean())
    if len(np.unique(y_true)) < 2:
        return {"accuracy": accuracy, "f1": None, "auc": None}
    tp = int(np.sum((pred == 1) & (y_true == 1)))
    fp = int(np.sum((pred == 1) & (y_true == 0)))
    fn = int(np.sum((pred == 0) & (y_true == 1)))
    f1 = 0.0 if (2 * tp + fp + fn) == 0 else 2.0 * tp / (2 * tp + fp + fn)
    # Mann-Whitney with midranks
    order = np.argsort(p_pred, kind="stable")
    ranks = np.empty(len(p_pred), dtype=np.float64)
    sorted_p = p_pred[order]
    i = 0
    while i < len(sorted_p):
        j = i
        while j + 1 < len(sorted_p) and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n1 = int(np.sum(y_true == 1))
    n0 = len(y_true) - n1
    u1 = float(ranks[y_true == 1].sum()) - n1 * (n1 + 1) / 2.0
    auc = u1 / (n1 * n0)
    return {"accuracy": accuracy, "f1": float(f1), "auc": float(auc)}


def _stratified_folds(y, k, rng):
    """Stratified k-fold assignment; may yield fewer folds than k when a
    class is too small (degenerate folds are skipped by the caller)."""
    n = len(y)
    assignment = np.empty(n, dtype=np.int64)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        assignment[idx] = np.arange(len(idx)) % k
    return assignment


def _inner_fold_assignment(y, cfg, seed):
    """One stratified fold assignment per search, shared by every candidate
    so their scores face identical validation noise."""
    k = min(cfg.inner_folds, int(np.bincount(y).min()))
    if k < 2:
        raise DataError("inner CV needs at least 2 rows of each class")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    return _stratified_folds(y, k, rng), k


def _score_candidate(params, family, X, y, assignment, k, resample_plan, metric, seed):
    scores = []
    for fold in range(k):
        val = assignment == fold
        tr = ~val
        ytr = y[tr]
        if len(np.unique(ytr)) < 2 or len(np.unique(y[val])) < 2:
            log.warning("skipping degenerate inner fold %d", fold)
            continue
        try:
            Xr, yr, wr = apply_resample(
                resample_plan, X[tr], ytr, derive_seed(seed, "resample", fold)
            )
            spec = ModelSpec.make(
                family,
                resample_mode=resample_plan.mode,
                seed=derive_seed(seed, "fit", fold),
                **params,
            )
            m = fit_model(spec, Xr, yr, wr)
            metrics = compute_metrics(y[val], predict_proba(m, X[val])[:, 1])
        except DataError as exc:
            log.warning("skipping inner fold %d: %s", fold, exc)
            continue
        if metrics.get(metric) is not None:
            scores.append(metrics[metric])
    if not scores:
        raise DataError("all inner folds degenerate during hyperparameter search")
    return float(np.mean(scores))


def _smbo_propose(space, evaluated, rng, n_candidates=24):
    """Pick the candidate with the best distance-weighted predicted score
    over the evaluated history (a deliberately small surrogate)."""
    names = sorted(space)

    def normalize(params):
        vec = []
        for name in names:
            kind, lo, hi = space[name][0], space[name][1], space[name][-1]
            v = params[name]
            if kind == "log":
                vec.append((np.log(v) - np.log(lo)) / (np.log(hi) - np.log(lo)))
            elif kind == "int":
                vec.append((v - lo) / max(hi - lo, 1))
            else:
                vec.append(0.0)
        return np.asarray(vec)

    hist = [(normalize(p), s) for p, s in evaluated]
    best = None
    best_pred = -np.inf
    for _ in range(n_candidates):
        cand = sample_space(space, rng)
        z = normalize(cand)
        d = np.array([np.linalg.norm(z - h) + 1e-6 for h, _ in hist])
        w = 1.0 / d
        pred = float(np.dot(w, [s for _, s in hist]) / w.sum())
        if pred > best_pred:
            best_pred = pred
            best = cand
    return best


def hyper_search(
    family: str,
    X_train,
    y_train,
    cfg: HyperSearchConfig,
    resample_plan: ResamplePlan | None = None,
    seed: int = 0,
) -> ModelSpec:
    """Best spec over `cfg.rounds` sampled configurations by mean inner-CV
    score; ties go to the first configuration encountered."""
    if family not in SEARCH_SPACES:
        raise UsageError(f"no search space declared for family {family!r}")
    resample_plan = resample_plan or ResamplePlan()
    X = np.ascontiguousarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.int64)
    space = SEARCH_SPACES[family]
    metric = cfg.metric_for(resample_plan.mode)

    assignment, k = _inner_fold_assignment(y, cfg, seed)
    best_params = None
    best_score = -np.inf
    evaluated = []
    n_init = cfg.rounds if cfg.strategy == "seeded_random" else max(cfg.rounds // 3, 5)
    for r in range(cfg.rounds):
        rng = rng_for(seed, "hyper", r)
        if cfg.strategy == "smbo" and r >= n_init and evaluated:
            params = _smbo_propose(space, evaluated, rng)
        else:
            params = sample_space(space, rng)
        score = _score_candidate(
            params, family, X, y, assignment, k, resample_plan, metric,
            derive_seed(seed, "cv", r),
        )
        evaluated.append((params, score))
        if score > best_score:
            best_score = score
            best_params = params
    return ModelSpec.make(
        family,
        resample_mode=resample_plan.mode,
        seed=derive_seed(seed, "winner"),
        **best_params,
    )


def _fit_fold(fm, family, resample_plan, search_cfg, train_idx, seed, fixed_spec=None):
    train_fm = fm.take(train_idx)
    plan = fit_preprocessor(train_fm)
    Xtr = apply_preprocessor(plan, train_fm)
    ytr = train_fm.y
    if fixed_spec is None:
        spec = hyper_search(
            family, Xtr, ytr, search_cfg, resample_plan, derive_seed(seed, "search")
        )
    else:
        spec = replace(fixed_spec, seed=derive_seed(seed, "fit"))
    Xr, yr, wr = apply_resample(resample_plan, Xtr, ytr, derive_seed(seed, "resample"))
    model = fit_model(spec, Xr, yr, wr)
    model.preprocess = plan
    return model, plan, spec


def evaluate_holdout(
    fm: FeatureMatrix,
    family: str,
    resample_plan: ResamplePlan,
    split_plan: SplitPlan,
    search_cfg: HyperSearchConfig,
    seed: int = 0,
    workers: int = 1,
) -> EvalReport:
    """Hyper-tuned metrics over the repeated stratified hold-out splits."""
    splits = holdout_splits(fm, split_plan)

    def run(task):
        r, (train_idx, test_idx) = task
        model, plan, _spec = _fit_fold(
            fm, family, resample_plan, search_cfg, train_idx,
            derive_seed(seed, "holdout", r),
        )
        Xte = apply_preprocessor(plan, fm.take(test_idx))
        return compute_metrics(fm.y[test_idx], predict_proba(model, Xte)[:, 1])

    runs = parallel_map(run, list(enumerate(splits)), workers)
    return EvalReport(
        kind="holdout",
        family=family,
        resample_mode=resample_plan.mode,
        runs=runs,
        config={
            "split_plan": vars(split_plan) | {"kind": "holdout"},
            "search": vars(search_cfg),
            "seed": seed,
        },
    )


def evaluate_loso(
    fm: FeatureMatrix,
    family: str,
    resample_plan: ResamplePlan,
    split_plan: SplitPlan,
    search_cfg: HyperSearchConfig,
    seed: int = 0,
    workers: int = 1,
    fixed_spec: ModelSpec | None = None,
) -> EvalReport:
    """Per-subject metrics over leave-one-subject-out folds.

    Hyperparameters are re-tuned inside every fold unless
    `search_cfg.retune_per_fold` is off, in which case `fixed_spec` (e.g.
    the hold-out winner) is reused.
    """
    if not search_cfg.retune_per_fold and fixed_spec is None:
        raise UsageError("retune_per_fold=False requires a fixed_spec to reuse")
    folds = loso_splits(fm, split_plan)

    def run(task):
        sid, train_idx, test_idx = task
        model, plan, _spec = _fit_fold(
            fm, family, resample_plan, search_cfg, train_idx,
            derive_seed(seed, "loso", sid),
            fixed_spec=None if search_cfg.retune_per_fold else fixed_spec,
        )
        Xte = apply_preprocessor(plan, fm.take(test_idx))
        metrics = compute_metrics(fm.y[test_idx], predict_proba(model, Xte)[:, 1])
        y_sub = fm.y[test_idx]
        metrics["n_rows"] = int(len(test_idx))
        metrics["labels"] = {
            "Normal": int(np.sum(y_sub == 0)),
            "Risk": int(np.sum(y_sub == 1)),
        }
        return sid, metrics

    results = parallel_map(run, folds, workers)
    return EvalReport(
        kind="loso",
        family=family,
        resample_mode=resample_plan.mode,
        per_subject=dict(results),
        config={
            "split_plan": vars(split_plan) | {"kind": "loso"},
            "search": vars(search_cfg),
            "seed": seed,
        },
    )


def failure_case_scan(report: EvalReport) -> list:
    """Subjects whose every LOSO prediction was wrong, with label mix."""
    if report.kind != "loso":
        raise UsageError("failure-case scan applies to LOSO reports")
    out = []
    for sid in sorted(report.per_subject):
        m = report.per_subject[sid]
        if m["accuracy"] == 0.0:
            out.append({"subject_id": sid, "n_rows": m["n_rows"], "labels": m["labels"]})
    return out
