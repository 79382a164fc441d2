"""Model zoo: CART, random forest (plain/balanced), second-order gradient
boosting, RUSBoost, L1 logistic regression, and k-NN.

Every family predicts class probabilities; tree-based families expose full
node structure for attribution and impurity importances. Fits are
deterministic functions of (spec, data): per-tree seeds derive from the
spec seed by name.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _treekernels as tk
from .errors import DataError, UsageError
from .preprocess import balanced_subsample
from .util import derive_seed

FAMILIES = ("cart", "forest", "gbdt", "rusboost", "lasso_logreg", "knn")

FAMILY_DEFAULTS = {
    "cart": {"max_depth": 32, "min_samples_leaf": 1, "min_samples_split": 2},
    "forest": {
        "n_trees": 100,
        "max_depth": 16,
        "min_samples_leaf": 5,
        "min_samples_split": 2,
    },
    "gbdt": {
        "n_rounds": 100,
        "learning_rate": 0.1,
        "max_depth": 3,
        "reg_lambda": 1.0,
        "min_samples_leaf": 5,
        "min_samples_split": 2,
    },
    "rusboost": {"n_rounds": 50, "max_depth": 2, "min_samples_leaf": 5, "min_samples_split": 2},
    "lasso_logreg": {"alpha": 0.01},
    "knn": {"k": 5},
}

TREE_FAMILIES = ("cart", "forest", "gbdt", "rusboost")


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def logit(p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return np.log(p / (1 - p))


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyperparams: tuple = ()  # sorted (name, value) pairs
    resample_mode: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown model family {self.family!r}")
        known = FAMILY_DEFAULTS[self.family]
        for name, _ in self.hyperparams:
            if name not in known:
                raise UsageError(f"unknown hyperparameter {name!r} for {self.family}")

    @classmethod
    def make(cls, family, resample_mode="none", seed=0, **hyperparams) -> "ModelSpec":
        return cls(
            family=family,
            hyperparams=tuple(sorted(hyperparams.items())),
            resample_mode=resample_mode,
            seed=seed,
        )

    @property
    def params(self) -> dict:
        merged = dict(FAMILY_DEFAULTS[self.family])
        merged.update(dict(self.hyperparams))
        return merged

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "hyperparams": dict(self.hyperparams),
            "resample_mode": self.resample_mode,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls.make(
            d["family"], resample_mode=d["resample_mode"], seed=d["seed"],
            **d["hyperparams"],
        )


@dataclass
class Tree:
    """Struct-of-arrays node view; `feature`/children are -1 at leaves.

    `value` holds the node's risk probability for classification trees and
    the additive margin contribution for boosted trees; `cover` counts the
    training rows that reached the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def value_vector(self) -> np.ndarray:
        """Per-node [p(Normal), p(Risk)] view for classification trees."""
        return np.column_stack([1.0 - self.value, self.value])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            impurity=np.asarray(d["impurity"], dtype=np.float64),
            cover=np.asarray(d["cover"], dtype=np.float64),
        )


@dataclass
class PackedEnsemble:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    offsets: np.ndarray
    max_depth: int


def pack_trees(trees) -> PackedEnsemble:
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for t, tree in enumerate(trees):
        offsets[t + 1] = offsets[t] + tree.n_nodes
    total = int(offsets[-1])
    feature = np.empty(total, np.int32)
    threshold = np.empty(total, np.float64)
    left = np.full(total, -1, np.int32)
    right = np.full(total, -1, np.int32)
    value = np.empty(total, np.float64)
    cover = np.empty(total, np.float64)
    for t, tree in enumerate(trees):
        a, b = int(offsets[t]), int(offsets[t + 1])
        feature[a:b] = tree.feature
        threshold[a:b] = tree.threshold
        internal = tree.left >= 0
        left[a:b][internal] = tree.left[internal] + a
        right[a:b][internal] = tree.right[internal] + a
        value[a:b] = tree.value
        cover[a:b] = tree.cover
    max_depth = 0
    for t in range(len(trees)):
        max_depth = max(max_depth, int(tk.tree_depth(left, right, int(offsets[t]))))
    return PackedEnsemble(feature, threshold, left, right, value, cover, offsets, max_depth)


@dataclass
class TrainedModel:
    spec: ModelSpec
    columns: list  # encoded input column names
    output_space: str  # "probability" | "log-odds"
    trees: list | None = None
    tree_combine: str | None = None  # "mean" | "sum"
    base_margin: float = 0.0
    coef: np.ndarray | None = None
    intercept: float = 0.0
    train_X: np.ndarray | None = None
    train_y: np.ndarray | None = None
    train_loss_path: list = field(default_factory=list)
    preprocess: object = None  # PreprocessPlan, attached by the pipeline
    _packed: PackedEnsemble | None = field(default=None, repr=False)

    @property
    def is_tree_based(self) -> bool:
        return self.trees is not None

    def packed(self) -> PackedEnsemble:
        if self._packed is None:
            self._packed = pack_trees(self.trees)
        return self._packed

    def to_dict(self) -> dict:
        d = {
            "spec": self.spec.to_dict(),
            "columns": list(self.columns),
            "output_space": self.output_space,
            "tree_combine": self.tree_combine,
            "base_margin": self.base_margin,
            "intercept": self.intercept,
        }
        if self.trees is not None:
            d["trees"] = [t.to_dict() for t in self.trees]
        if self.coef is not None:
            d["coef"] = self.coef.tolist()
        if self.train_X is not None:
            d["train_X"] = self.train_X.tolist()
            d["train_y"] = self.train_y.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        return cls(
            spec=ModelSpec.from_dict(d["spec"]),
            columns=list(d["columns"]),
            output_space=d["output_space"],
            trees=[Tree.from_dict(t) for t in d["trees"]] if "trees" in d else None,
            tree_combine=d.get("tree_combine"),
            base_margin=float(d.get("base_margin", 0.0)),
            coef=np.asarray(d["coef"], np.float64) if "coef" in d else None,
            intercept=float(d.get("intercept", 0.0)),
            train_X=np.asarray(d["train_X"], np.float64) if "train_X" in d else None,
            train_y=np.asarray(d["train_y"], np.int64) if "train_y" in d else None,
        )


def _check_training_inputs(spec, X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DataError("X must be 2-D with one label per row")
    if X.shape[0] < 2:
        raise DataError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite values in training matrix")
    if spec.family != "knn" and len(np.unique(y)) < 2:
        raise DataError(f"{spec.family} needs both classes in training labels")
    return X, y


def _grow_cls(X, y, w, p, mtry, seed) -> Tree:
    arrays = tk.grow_tree_cls(
        X, y.astype(np.float64), w,
        int(p["max_depth"]), int(p["min_samples_leaf"]), int(p["min_samples_split"]),
        int(mtry), int(seed),
    )
    return Tree(*arrays)


def fit_model(spec: ModelSpec, X, y, sample_weight=None) -> TrainedModel:
    """Fit one model; deterministic under (spec.seed, inputs)."""
    X, y = _check_training_inputs(spec, X, y)
    n, d = X.shape
    w = (
        np.ones(n, dtype=np.float64)
        if sample_weight is None
        else np.asarray(sample_weight, dtype=np.float64).copy()
    )
    p = spec.params
    columns = [f"x{j}" for j in range(d)]

    if spec.family == "cart":
        tree = _grow_cls(X, y, w, p, d, derive_seed(spec.seed, "tree", 0))
        return TrainedModel(
            spec=spec, columns=columns, output_space="probability",
            trees=[tree], tree_combine="mean",
        )

    if spec.family == "forest":
        mtry = max(1, int(round(np.sqrt(d))))
        balanced = spec.resample_mode in ("balanced_subsample", "random_undersample")
        trees = []
        for t in range(int(p["n_trees"])):
            seed_t = derive_seed(spec.seed, "tree", t)
            if balanced:
                idx = balanced_subsample(X, y, seed_t)
            else:
                idx = np.random.default_rng(seed_t).integers(0, n, size=n)
            trees.append(
                _grow_cls(X[idx], y[idx], w[idx], p, mtry, derive_seed(seed_t, "grow"))
            )
        return TrainedModel(
            spec=spec, columns=columns, output_space="probability",
            trees=trees, tree_combine="mean",
        )

    if spec.family == "gbdt":
        eta = float(p["learning_rate"])
        lam = float(p["reg_lambda"])
        p_bar = float(np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6))
        base = float(logit(p_bar))
        margin = np.full(n, base, dtype=np.float64)
        trees = []
        losses = []
        yf = y.astype(np.float64)
        for t in range(int(p["n_rounds"])):
            prob = sigmoid(margin)
            grad = w * (prob - yf)
            hess = w * prob * (1.0 - prob)
            arrays = tk.grow_tree_grad(
                X, grad, hess, lam,
                int(p["max_depth"]), int(p["min_samples_leaf"]),
                int(p["min_samples_split"]), d,
                derive_seed(spec.seed, "tree", t),
            )
            tree = Tree(*arrays)
            tree.value = tree.value * eta
            out = np.empty(n, dtype=np.float64)
            tk.predict_tree(
                tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, out
            )
            margin += out
            trees.append(tree)
            prob = sigmoid(margin)
            losses.append(float(-np.sum(w * (yf * np.log(np.clip(prob, 1e-12, None))
                                              + (1 - yf) * np.log(np.clip(1 - prob, 1e-12, None)))) / n))
        return TrainedModel(
            spec=spec, columns=columns, output_space="log-odds",
            trees=trees, tree_combine="sum", base_margin=base,
            train_loss_path=losses,
        )

    if spec.family == "rusboost":
        dist = w / w.sum()
        y_signed = 2.0 * y - 1.0
        trees = []
        alphas = []
        for t in range(int(p["n_rounds"])):
            seed_t = derive_seed(spec.seed, "round", t)
            sel = balanced_subsample(X, y, seed_t)
            w_sel = dist[sel]
            w_sel = w_sel * (len(sel) / w_sel.sum())
            tree = _grow_cls(X[sel], y[sel], w_sel, p, d, derive_seed(seed_t, "grow"))
            out = np.empty(n, dtype=np.float64)
            tk.predict_tree(
                tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, out
            )
            h_signed = np.where(out > 0.5, 1.0, -1.0)
            err = float(dist[h_signed != y_signed].sum())
            if err >= 0.5:
                break
            err = min(max(err, 1e-10), 1 - 1e-10)
            alpha = 0.5 * np.log((1 - err) / err)
            dist = dist * np.exp(-alpha * y_signed * h_signed)
            dist = dist / dist.sum()
            trees.append(tree)
            alphas.append(alpha)
        if not trees:
            raise DataError("rusboost found no weak learner better than chance")
        # re-express each leaf as its share of the ensemble vote so the
        # ensemble output is a plain sum of tree values
        alpha_total = float(np.sum(alphas))
        for tree, alpha in zip(trees, alphas):
            tree.value = np.where(tree.value > 0.5, alpha / alpha_total, 0.0)
        return TrainedModel(
            spec=spec, columns=columns, output_space="probability",
            trees=trees, tree_combine="sum",
        )

    if spec.family == "lasso_logreg":
        coef, intercept = _fit_lasso_logreg(X, y, w, float(p["alpha"]))
        return TrainedModel(
            spec=spec, columns=columns, output_space="probability",
            coef=coef, intercept=intercept,
        )

    # knn
    return TrainedModel(
        spec=spec, columns=columns, output_space="probability",
        train_X=X.copy(), train_y=y.copy(),
    )


def _fit_lasso_logreg(X, y, w, alpha, max_outer=100, tol=1e-10):
    """L1-penalized logistic regression by proximal coordinate descent on
    the IRLS quadratic approximation; the intercept is unpenalized.

    Objective: (1/n) sum_i w_i * logloss_i + alpha * ||beta||_1.
    """
    n, d = X.shape
    yf = y.astype(np.float64)
    beta = np.zeros(d)
    p_bar = float(np.clip(np.average(yf, weights=w), 1e-12, 1 - 1e-12))
    b0 = float(np.log(p_bar / (1 - p_bar)))
    eta = np.full(n, b0)
    sq = X * X
    for _ in range(max_outer):
        prob = sigmoid(eta)
        curvature = np.clip(prob * (1.0 - prob), 1e-8, None)
        z = eta + (yf - prob) / curvature
        wq = w * curvature
        delta_outer = 0.0
        for _ in range(100):
            delta_inner = 0.0
            for j in range(d):
                bj = beta[j]
                resid = z - eta + X[:, j] * bj
                rho = float(np.dot(wq * X[:, j], resid)) / n
                denom = float(np.dot(wq, sq[:, j])) / n
                if denom <= 0:
                    continue
                new = np.sign(rho) * max(abs(rho) - alpha, 0.0) / denom
                if new != bj:
                    eta = eta + X[:, j] * (new - bj)
                    beta[j] = new
                    delta_inner = max(delta_inner, abs(new - bj))
            swq = float(wq.sum())
            shift = float(np.dot(wq, z - eta)) / swq
            if shift != 0.0:
                b0 += shift
                eta = eta + shift
                delta_inner = max(delta_inner, abs(shift))
            delta_outer = max(delta_outer, delta_inner)
            if delta_inner < tol:
                break
        if delta_outer < 1e-8:
            break
    return beta, b0


def predict_margin(m: TrainedModel, X) -> np.ndarray:
    """Raw additive output: log-odds margin for gbdt, probability-space
    score for the other tree ensembles, linear logit for the lasso."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != len(m.columns):
        raise DataError(
            f"expected {len(m.columns)} columns, got {X.shape[1]}"
        )
    if m.is_tree_based:
        pk = m.packed()
        out = tk.ensemble_predict(
            pk.feature, pk.threshold, pk.left, pk.right, pk.value, pk.offsets,
            X, m.tree_combine == "mean",
        )
        return out + m.base_margin
    if m.coef is not None:
        return m.intercept + X @ m.coef
    # knn: vote fraction among the k nearest training rows
    k = int(m.spec.params["k"])
    k = min(k, len(m.train_y))
    d2 = ((X[:, None, :] - m.train_X[None, :, :]) ** 2).sum(axis=2)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return m.train_y[order].mean(axis=1)


def predict_proba(m: TrainedModel, X) -> np.ndarray:
    """(n, 2) class probabilities, columns [Normal, Risk]."""
    raw = predict_margin(m, X)
    if m.output_space == "log-odds":
        p1 = sigmoid(raw)
    elif m.coef is not None:
        p1 = sigmoid(raw)
    else:
        p1 = np.clip(raw, 0.0, 1.0)
    return np.column_stack([1.0 - p1, p1])


def model_output(m: TrainedModel, X) -> np.ndarray:
    """The scalar output the attribution engines explain: log-odds margin
    for gbdt, risk probability otherwise."""
    if m.output_space == "log-odds":
        return predict_margin(m, X)
    return predict_proba(m, X)[:, 1]


def tree_structure(m: TrainedModel) -> list:
    """Complete structural view of every tree in the model."""
    if not m.is_tree_based:
        raise DataError(f"{m.spec.family} is not a tree-based model")
    return list(m.trees)
