"""Train-fitted encoding/standardization and imbalance management.

Plans are fitted on training rows only and are immutable afterwards; every
resampling operation is deterministic under a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .featureng import FeatureMatrix, SEX_VOCAB

RESAMPLE_MODES = ("none", "smote", "class_weights", "balanced_subsample", "random_undersample")


@dataclass
class PreprocessPlan:
    columns: list  # raw column names, in order
    roles: dict  # name -> numeric | boolean | categorical
    means: dict  # numeric name -> train mean
    stds: dict  # numeric name -> train population stddev
    constant: list  # numeric columns flagged constant (transformed to zeros)
    vocab: dict  # categorical name -> tuple of category labels

    @property
    def encoded_columns(self) -> list:
        out = []
        for name in self.columns:
            if self.roles[name] == "categorical":
                out.extend(f"{name}={v}" for v in self.vocab[name])
            else:
                out.append(name)
        return out

    @property
    def encoded_groups(self) -> dict:
        """Display feature -> list of encoded column indices."""
        groups: dict = {}
        i = 0
        for name in self.columns:
            if self.roles[name] == "categorical":
                groups[name] = list(range(i, i + len(self.vocab[name])))
                i += len(self.vocab[name])
            else:
                groups[name] = [i]
                i += 1
        return groups

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "roles": dict(self.roles),
            "means": dict(self.means),
            "stds": dict(self.stds),
            "constant": list(self.constant),
            "vocab": {k: list(v) for k, v in self.vocab.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessPlan":
        return cls(
            columns=list(d["columns"]),
            roles=dict(d["roles"]),
            means=dict(d["means"]),
            stds=dict(d["stds"]),
            constant=list(d["constant"]),
            vocab={k: tuple(v) for k, v in d["vocab"].items()},
        )


@dataclass
class ResamplePlan:
    mode: str = "none"
    smote_k: int = 5
    class_weight_scheme: str | dict = "inverse_frequency"

    def __post_init__(self):
        if self.mode not in RESAMPLE_MODES:
            raise DataError(f"unknown resample mode {self.mode!r}")
        if self.smote_k < 1:
            raise DataError("smote_k must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "smote_k": self.smote_k,
            "class_weight_scheme": self.class_weight_scheme,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResamplePlan":
        return cls(**d)


def fit_preprocessor(train: FeatureMatrix) -> PreprocessPlan:
    """Capture per-column means/stddevs and category vocabularies from
    training rows only. Population convention (divide by n) for stddev.
    """
    if train.X.shape[0] < 2:
        raise DataError("need at least 2 training rows to fit a preprocessor")
    roles = train.roles
    means, stds, constant = {}, {}, []
    vocab = {}
    for j, name in enumerate(train.columns):
        role = roles[name]
        if role == "numeric":
            col = train.X[:, j]
            mu = float(col.mean())
            sd = float(col.std())  # ddof=0
            means[name] = mu
            stds[name] = sd
            if sd == 0.0:
                constant.append(name)
        elif role == "categorical":
            vocab[name] = SEX_VOCAB if name == "Sex" else tuple(
                sorted({str(int(v)) for v in train.X[:, j]})
            )
    return PreprocessPlan(
        columns=list(train.columns),
        roles=roles,
        means=means,
        stds=stds,
        constant=constant,
        vocab=vocab,
    )


def apply_preprocessor(plan: PreprocessPlan, rows) -> np.ndarray:
    """Encode raw rows with train statistics: z-scored numerics, 0/1
    booleans, one-hot categoricals. Unknown categories are errors.
    """
    X = rows.X if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=np.float64)
    if isinstance(rows, FeatureMatrix) and list(rows.columns) != list(plan.columns):
        raise DataError("columns do not match the fitted preprocessing plan")
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != len(plan.columns):
        raise DataError(
            f"expected {len(plan.columns)} raw columns, got {X.shape[1]}"
        )
    out_cols = []
    for j, name in enumerate(plan.columns):
        role = plan.roles[name]
        col = X[:, j]
        if role == "numeric":
            if name in plan.constant:
                out_cols.append(np.zeros_like(col))
            else:
                out_cols.append((col - plan.means[name]) / plan.stds[name])
        elif role == "boolean":
            out_cols.append(col.astype(np.float64))
        else:
            cats = plan.vocab[name]
            codes = col.astype(np.int64)
            if np.any((codes < 0) | (codes >= len(cats))):
                bad = codes[(codes < 0) | (codes >= len(cats))][0]
                raise DataError(f"unknown category code {bad} for column {name}")
            for c in range(len(cats)):
                out_cols.append((codes == c).astype(np.float64))
    return np.column_stack(out_cols)


def smote_oversample(X, y, k: int, seed: int):
    """Balance classes by interpolating new minority rows between nearest
    minority neighbors. Original rows come first in the output.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise DataError("SMOTE needs exactly two classes")
    if counts[0] == counts[1]:
        return X.copy(), y.copy()
    minority = classes[np.argmin(counts)]
    minority_idx = np.flatnonzero(y == minority)
    n_min = len(minority_idx)
    if n_min <= k:
        raise DataError(f"minority count {n_min} must exceed smote_k {k}")
    n_synth = int(counts.max() - counts.min())
    Xm = X[minority_idx]
    # pairwise distances among minority rows, self excluded
    d2 = ((Xm[:, None, :] - Xm[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    neighbor_ids = np.argsort(d2, axis=1, kind="stable")[:, :k]
    rng = np.random.default_rng(seed)
    synth = np.empty((n_synth, X.shape[1]), dtype=np.float64)
    for t in range(n_synth):
        base = t % n_min
        nb = neighbor_ids[base, rng.integers(0, k)]
        lam = rng.uniform(0.0, 1.0)
        synth[t] = Xm[base] + lam * (Xm[nb] - Xm[base])
    X_out = np.vstack([X, synth])
    y_out = np.concatenate([y, np.full(n_synth, minority, dtype=np.int64)])
    return X_out, y_out


def class_weights(y, scheme="inverse_frequency") -> dict:
    """Per-class weights; the default is inverse class frequency normalized
    so the mean sample weight is 1 (hence sum of weights = n).
    """
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DataError("class weights need both classes present")
    if isinstance(scheme, dict):
        return {int(c): float(scheme[int(c)]) for c in classes}
    if scheme != "inverse_frequency":
        raise DataError(f"unknown class weight scheme {scheme!r}")
    n = len(y)
    k = len(classes)
    return {int(c): n / (k * int(cnt)) for c, cnt in zip(classes, counts)}


def sample_weights(y, scheme="inverse_frequency") -> np.ndarray:
    wmap = class_weights(y, scheme)
    return np.array([wmap[int(v)] for v in y], dtype=np.float64)


def balanced_subsample(X, y, seed: int) -> np.ndarray:
    """Indices of an exactly class-balanced subset (minority size per
    class), drawn without replacement within each class.
    """
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DataError("balanced subsample needs both classes present")
    n_take = int(counts.min())
    rng = np.random.default_rng(seed)
    parts = []
    for c in classes:
        idx = np.flatnonzero(y == c)
        chosen = rng.choice(idx, size=n_take, replace=False)
        parts.append(np.sort(chosen))
    return np.concatenate(parts)


def apply_resample(plan: ResamplePlan, X, y, seed: int):
    """Realize a resampling regime: returns (X, y, sample_weight|None)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if plan.mode == "none":
        return X, y, None
    if plan.mode == "smote":
        counts = np.bincount(y, minlength=2)
        k = min(plan.smote_k, int(counts[counts > 0].min()) - 1)
        if k < 1:
            raise DataError("minority class too small for SMOTE")
        Xr, yr = smote_oversample(X, y, k, seed)
        return Xr, yr, None
    if plan.mode == "class_weights":
        return X, y, sample_weights(y, plan.class_weight_scheme)
    idx = balanced_subsample(X, y, seed)
    return X[idx], y[idx], None
