"""Attribution engines: exact tree Shapley values (with pairwise
interactions), local linear surrogates, permutation importance, and
impurity importance, plus global rankings and dependence-trend data.

Tree attributions are exact for the tree-conditioned value function and
additive over ensemble members; the surrogate and permutation engines are
model-agnostic. Rankings are total orders over display features: one-hot
groups (Sex) are collapsed to a single entry before ranking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _treekernels as tk
from .errors import DataError, UsageError
from .models import TrainedModel, model_output, predict_proba
from .util import derive_seed, parallel_map, rng_for

XAI_METHODS = ("SHAP", "LIME", "MDI", "MDA")


@dataclass
class Attribution:
    values: np.ndarray  # per encoded input column, signed
    base: float
    output_space: str  # "probability" | "log-odds"
    columns: list

    def total(self) -> float:
        return float(self.values.sum() + self.base)


@dataclass
class InteractionMatrix:
    values: np.ndarray  # (d, d), symmetric; diagonal = main effects
    base: float
    output_space: str
    columns: list

    def main_effects(self) -> np.ndarray:
        return np.diag(self.values).copy()

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass
class ImportanceRanking:
    method: str
    entries: list  # (display feature, score), descending

    def __post_init__(self):
        if self.method not in XAI_METHODS:
            raise UsageError(f"unknown attribution method {self.method!r}")

    @property
    def features(self) -> list:
        return [f for f, _ in self.entries]

    def top(self, k: int) -> list:
        return self.features[:k]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "entries": [[f, float(s)] for f, s in self.entries],
        }


@dataclass
class DependenceSeries:
    feature: str
    method: str
    points: np.ndarray  # (n, 2): feature value, main-effect score

    def to_rows(self) -> list:
        return [[float(a), float(b)] for a, b in self.points]


@dataclass
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # default 0.75 * sqrt(d)
    ridge: float = 1e-3
    seed: int = 0
    column_stds: np.ndarray | None = None  # perturbation scale per column


def _identity_groups(columns) -> dict:
    return {name: [j] for j, name in enumerate(columns)}


def _groups_for(m: TrainedModel, groups) -> dict:
    if groups is not None:
        return groups
    if m.preprocess is not None:
        return m.preprocess.encoded_groups
    return _identity_groups(m.columns)


def _rank(method: str, scores: dict) -> ImportanceRanking:
    entries = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ImportanceRanking(method=method, entries=[(f, float(s)) for f, s in entries])


def _collapse(scores_per_column: np.ndarray, groups: dict) -> dict:
    return {
        name: float(sum(scores_per_column[j] for j in cols))
        for name, cols in groups.items()
    }


def _require_tree(m: TrainedModel):
    if not m.is_tree_based:
        raise DataError(f"{m.spec.family} has no tree structure to attribute")


def _shap_matrix(m: TrainedModel, X) -> tuple:
    pk = m.packed()
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    d = len(m.columns)
    if X.shape[1] != d:
        raise DataError(f"expected {d} columns, got {X.shape[1]}")
    phi, base = tk.ensemble_shap_matrix(
        pk.feature, pk.threshold, pk.left, pk.right, pk.value, pk.cover,
        pk.offsets, X, d, pk.max_depth,
    )
    if m.tree_combine == "mean":
        phi /= len(m.trees)
        base /= len(m.trees)
    return phi, base + m.base_margin


def tree_shap(m: TrainedModel, x) -> Attribution:
    """Exact Shapley values of the tree-conditioned value function for one
    instance; Sum(values) + base equals the model output."""
    _require_tree(m)
    phi, base = _shap_matrix(m, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return Attribution(
        values=phi[0], base=float(base),
        output_space=m.output_space, columns=list(m.columns),
    )


def shap_interactions(m: TrainedModel, x) -> InteractionMatrix:
    """Pairwise interaction values; diagonal main effects close each row
    sum to the instance's Shapley value."""
    _require_tree(m)
    pk = m.packed()
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    d = len(m.columns)
    inter, phi, base = tk.ensemble_shap_interactions(
        pk.feature, pk.threshold, pk.left, pk.right, pk.value, pk.cover,
        pk.offsets, x, d, pk.max_depth,
    )
    inter, phi = inter[0], phi[0]
    if m.tree_combine == "mean":
        inter /= len(m.trees)
        phi /= len(m.trees)
        base /= len(m.trees)
    sym = 0.5 * (inter + inter.T)
    np.fill_diagonal(sym, 0.0)
    for i in range(d):
        sym[i, i] = phi[i] - sym[i].sum()
    return InteractionMatrix(
        values=sym, base=float(base + m.base_margin),
        output_space=m.output_space, columns=list(m.columns),
    )


def shap_global_ranking(m: TrainedModel, X, groups=None) -> ImportanceRanking:
    """Mean absolute Shapley value per feature, descending."""
    _require_tree(m)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise DataError("need at least one row for a global ranking")
    phi, _ = _shap_matrix(m, X)
    per_col = np.abs(phi).mean(axis=0)
    return _rank("SHAP", _collapse(per_col, _groups_for(m, groups)))


def _as_output_fn(m):
    if isinstance(m, TrainedModel):
        return lambda X: model_output(m, X), m.output_space
    return m, "probability"


def lime_explain(m, x, cfg: LimeConfig | None = None, columns=None) -> Attribution:
    """Weighted ridge surrogate fitted to the model on Gaussian
    perturbations around `x`; the weights are the per-feature scores.

    `m` may be a TrainedModel or any callable mapping a matrix to outputs.
    """
    cfg = cfg or LimeConfig()
    fn, space = _as_output_fn(m)
    x = np.asarray(x, dtype=np.float64).ravel()
    d = len(x)
    if cfg.n_samples < 10 * d:
        raise UsageError(f"LIME needs >= {10 * d} perturbations for {d} features")
    if columns is None:
        columns = m.columns if isinstance(m, TrainedModel) else [f"x{j}" for j in range(d)]
    stds = (
        np.ones(d)
        if cfg.column_stds is None
        else np.asarray(cfg.column_stds, dtype=np.float64)
    )
    kernel_width = cfg.kernel_width or 0.75 * np.sqrt(d)

    # antithetic pairs: mirrored perturbations cancel the even part of the
    # residual's spurious correlation with unused directions
    rng = np.random.default_rng(cfg.seed)
    half = (cfg.n_samples + 1) // 2
    offsets = rng.standard_normal((half, d)) * stds
    Z = np.vstack([x + offsets, x - offsets])[: cfg.n_samples]
    Z[0] = x
    out = np.asarray(fn(Z), dtype=np.float64)
    dist2 = (((Z - x) / np.where(stds > 0, stds, 1.0)) ** 2).sum(axis=1)
    w = np.exp(-dist2 / kernel_width**2)

    wsum = w.sum()
    zbar = (w[:, None] * Z).sum(axis=0) / wsum
    ybar = float((w * out).sum() / wsum)
    Zc = Z - zbar
    yc = out - ybar
    A = (Zc * w[:, None]).T @ Zc
    b = (Zc * w[:, None]).T @ yc
    ridge = cfg.ridge
    while True:
        try:
            beta = np.linalg.solve(A + ridge * np.eye(d), b)
            break
        except np.linalg.LinAlgError:
            ridge *= 10.0
    intercept = ybar - float(zbar @ beta)
    return Attribution(
        values=beta, base=float(intercept + x @ beta),
        output_space=space, columns=list(columns),
    )


def lime_global_ranking(
    m: TrainedModel, X, cfg: LimeConfig | None = None, groups=None, workers: int = 1
) -> ImportanceRanking:
    """Mean absolute surrogate weight per feature over all rows of X."""
    cfg = cfg or LimeConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)

    def run(i):
        row_cfg = LimeConfig(
            n_samples=cfg.n_samples,
            kernel_width=cfg.kernel_width,
            ridge=cfg.ridge,
            seed=derive_seed(cfg.seed, "lime", i),
            column_stds=cfg.column_stds,
        )
        return np.abs(lime_explain(m, X[i], row_cfg).values)

    weights = parallel_map(run, list(range(X.shape[0])), workers)
    per_col = np.mean(weights, axis=0)
    return _rank("LIME", _collapse(per_col, _groups_for(m, groups)))


def permutation_importance(
    m: TrainedModel, X, y, repeats: int = 10, seed: int = 0, groups=None
) -> ImportanceRanking:
    """Mean decrease in accuracy when a feature's values are shuffled.

    One-hot groups are permuted jointly with the same row order. Negative
    scores are kept as-is (no clamping) and rank below zero scores.
    """
    if repeats < 1:
        raise UsageError("permutation importance needs repeats >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise DataError("need at least one row")
    groups = _groups_for(m, groups)
    baseline = float(((predict_proba(m, X)[:, 1] > 0.5).astype(np.int64) == y).mean())
    scores = {}
    for name in sorted(groups):
        cols = groups[name]
        drops = []
        for r in range(repeats):
            rng = rng_for(seed, "mda", name, r)
            perm = rng.permutation(X.shape[0])
            Xp = X.copy()
            Xp[:, cols] = X[perm][:, cols]
            acc = float(((predict_proba(m, Xp)[:, 1] > 0.5).astype(np.int64) == y).mean())
            drops.append(baseline - acc)
        scores[name] = float(np.mean(drops))
    return _rank("MDA", scores)


def impurity_importance(m: TrainedModel, groups=None) -> ImportanceRanking:
    """Coverage-weighted impurity decrease summed over each feature's
    splits, averaged across trees, normalized to sum 1."""
    _require_tree(m)
    d = len(m.columns)
    totals = np.zeros(d)
    for tree in m.trees:
        contrib = np.zeros(d)
        for node in range(tree.n_nodes):
            f = int(tree.feature[node])
            if f < 0:
                continue
            left, right = int(tree.left[node]), int(tree.right[node])
            decrease = (
                tree.cover[node] * tree.impurity[node]
                - tree.cover[left] * tree.impurity[left]
                - tree.cover[right] * tree.impurity[right]
            )
            contrib[f] += decrease
        totals += contrib
    totals /= len(m.trees)
    collapsed = _collapse(totals, _groups_for(m, groups))
    norm = sum(collapsed.values())
    if norm > 0:
        collapsed = {k: v / norm for k, v in collapsed.items()}
    return _rank("MDI", collapsed)


def shap_main_effects_matrix(m: TrainedModel, X) -> np.ndarray:
    """(n, d) matrix of per-instance main effects: each feature's
    attribution with pairwise interactions removed (the interaction-matrix
    diagonal), computed for all rows in one pass."""
    _require_tree(m)
    pk = m.packed()
    X = np.ascontiguousarray(X, dtype=np.float64)
    d = len(m.columns)
    inter, phi, _base = tk.ensemble_shap_interactions(
        pk.feature, pk.threshold, pk.left, pk.right, pk.value, pk.cover,
        pk.offsets, X, d, pk.max_depth,
    )
    if m.tree_combine == "mean":
        inter /= len(m.trees)
        phi /= len(m.trees)
    sym = 0.5 * (inter + np.transpose(inter, (0, 2, 1)))
    off = sym.sum(axis=2) - np.einsum("nii->ni", sym)
    return phi - off


def dependence_data(
    m: TrainedModel,
    X,
    feature: str,
    method: str = "SHAP",
    cfg: LimeConfig | None = None,
    groups=None,
    x_values=None,
    workers: int = 1,
    main_effects: np.ndarray | None = None,
) -> DependenceSeries:
    """Per-instance (feature value, main-effect score) pairs.

    SHAP route (tree models): the interaction-matrix diagonal, i.e. the
    feature's attribution with interactions removed. LIME route: the
    surrogate weight of the feature at each instance. `x_values` overrides
    the plotted x-axis (e.g. raw instead of standardized units); a
    precomputed `shap_main_effects_matrix` result can be passed to avoid
    recomputing the interaction tensor per feature.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    groups = _groups_for(m, groups)
    if feature not in groups:
        raise DataError(f"unknown feature {feature!r}")
    cols = groups[feature]
    if len(cols) != 1:
        raise DataError(f"{feature!r} expands to {len(cols)} columns; trends need one")
    j = cols[0]
    xs = X[:, j] if x_values is None else np.asarray(x_values, dtype=np.float64)
    if len(xs) != X.shape[0]:
        raise DataError("x_values length must match the row count")

    if method == "SHAP":
        if main_effects is None:
            main_effects = shap_main_effects_matrix(m, X)
        scores = main_effects[:, j]
    elif method == "LIME":
        cfg = cfg or LimeConfig()

        def run(i):
            row_cfg = LimeConfig(
                n_samples=cfg.n_samples,
                kernel_width=cfg.kernel_width,
                ridge=cfg.ridge,
                seed=derive_seed(cfg.seed, "lime", i),
                column_stds=cfg.column_stds,
            )
            return float(lime_explain(m, X[i], row_cfg).values[j])

        scores = np.asarray(parallel_map(run, list(range(X.shape[0])), workers))
    else:
        raise UsageError("dependence trends support the SHAP and LIME routes")
    return DependenceSeries(
        feature=feature, method=method, points=np.column_stack([xs, scores])
    )


def all_rankings(
    m: TrainedModel, X, y, groups=None, lime_cfg: LimeConfig | None = None,
    mda_repeats: int = 10, seed: int = 0, workers: int = 1,
) -> dict:
    """Every applicable method's global ranking for one model: all four
    for tree models, LIME + MDA otherwise."""
    groups = _groups_for(m, groups)
    out = {}
    if m.is_tree_based:
        out["SHAP"] = shap_global_ranking(m, X, groups)
        out["MDI"] = impurity_importance(m, groups)
    cfg = lime_cfg or LimeConfig()
    out["LIME"] = lime_global_ranking(m, X, cfg, groups, workers)
    out["MDA"] = permutation_importance(
        m, X, y, repeats=mda_repeats, seed=derive_seed(seed, "mda"), groups=groups
    )
    return out
