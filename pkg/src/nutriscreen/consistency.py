"""Explanation-agreement scoring: exact and non-exact top-K matches
between feature rankings, per model and method pair.

Exact = same feature at the same rank position; non-exact = same feature
anywhere in both top-K sets (a superset of the exact matches).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError, SchemaError
from .xai import ImportanceRanking

DEFAULT_KS = (1, 3, 5)
METHOD_ORDER = ("SHAP", "LIME", "MDI", "MDA")


@dataclass(frozen=True)
class AgreementCell:
    model: str
    method_a: str
    method_b: str
    k: int
    exact: int
    non_exact: int | None  # absent for k = 1

    def __post_init__(self):
        hi = self.non_exact if self.non_exact is not None else self.exact
        if not 0 <= self.exact <= hi <= self.k:
            raise DataError(
                f"agreement cell violates 0 <= exact <= non_exact <= K: {self}"
            )


@dataclass
class AgreementMatrix:
    model: str
    cells: list = field(default_factory=list)

    def cell(self, method_a: str, method_b: str, k: int) -> AgreementCell:
        pair = frozenset((method_a, method_b))
        for c in self.cells:
            if frozenset((c.method_a, c.method_b)) == pair and c.k == k:
                return c
        raise DataError(f"no agreement cell for {method_a} vs {method_b} at K={k}")

    def summary(self) -> dict:
        """Share of comparisons with substantial non-exact overlap."""
        k3 = [c for c in self.cells if c.k == 3]
        k5 = [c for c in self.cells if c.k == 5]
        out = {}
        if k3:
            out["k3_non_exact_ge_2"] = sum(c.non_exact >= 2 for c in k3) / len(k3)
        if k5:
            out["k5_non_exact_ge_3"] = sum(c.non_exact >= 3 for c in k5) / len(k5)
        return out

    def to_csv(self) -> str:
        lines = ["model,method_a,method_b,K,exact,non_exact"]
        for c in self.cells:
            non_exact = "" if c.non_exact is None else str(c.non_exact)
            lines.append(
                f"{c.model},{c.method_a},{c.method_b},{c.k},{c.exact},{non_exact}"
            )
        return "\n".join(lines) + "\n"


def _feature_lists(a, b):
    fa = a.features if isinstance(a, ImportanceRanking) else list(a)
    fb = b.features if isinstance(b, ImportanceRanking) else list(b)
    return fa, fb


def topk_agreement(a, b, k: int) -> tuple:
    """(exact, non_exact) match counts between the top-K of two rankings.

    Accepts ImportanceRanking objects or plain ordered feature lists. The
    lists must have equal length and no duplicates; truncated top lists
    over a shared feature universe are legitimate inputs (their visible
    membership may differ), while full rankings must cover the same set.
    """
    fa, fb = _feature_lists(a, b)
    if len(fa) != len(fb):
        raise DataError(
            f"rankings cover different feature sets ({len(fa)} vs {len(fb)} entries)"
        )
    if len(set(fa)) != len(fa) or len(set(fb)) != len(fb):
        raise DataError("rankings contain duplicate features")
    if not 1 <= k <= len(fa):
        raise DataError(f"K={k} outside [1, {len(fa)}]")
    exact = sum(1 for i in range(k) if fa[i] == fb[i])
    non_exact = len(set(fa[:k]) & set(fb[:k]))
    return exact, non_exact


def agreement_matrix(rankings: dict, ks=DEFAULT_KS, model: str = "") -> AgreementMatrix:
    """All unordered method pairs at every K; K=1 reports exact only."""
    if len(rankings) < 2:
        raise DataError("agreement needs rankings from at least 2 methods")
    methods = sorted(
        rankings,
        key=lambda m: METHOD_ORDER.index(m) if m in METHOD_ORDER else len(METHOD_ORDER),
    )
    cells = []
    for i in range(len(methods)):
        for j in range(i + 1, len(methods)):
            for k in ks:
                exact, non_exact = topk_agreement(
                    rankings[methods[i]], rankings[methods[j]], k
                )
                cells.append(
                    AgreementCell(
                        model=model,
                        method_a=methods[i],
                        method_b=methods[j],
                        k=k,
                        exact=exact,
                        non_exact=None if k == 1 else non_exact,
                    )
                )
    return AgreementMatrix(model=model, cells=cells)


def load_rankings_json(path) -> dict:
    """Read externally produced rankings: a JSON list of objects with
    `model`, `method`, and ordered `features`. Returns model -> method ->
    feature list."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"rankings file is not valid JSON: {exc}")
    if not isinstance(data, list):
        raise SchemaError("rankings file must be a JSON list")
    out: dict = {}
    for i, row in enumerate(data):
        if not isinstance(row, dict) or not {"model", "method", "features"} <= set(row):
            raise SchemaError(f"rankings entry {i} needs model/method/features")
        if not isinstance(row["features"], list) or not row["features"]:
            raise SchemaError(f"rankings entry {i} has an empty feature list")
        out.setdefault(row["model"], {})[row["method"]] = list(row["features"])
    return out


def agreement_from_file(path, ks=DEFAULT_KS) -> list:
    """Standalone agreement computation for a rankings JSON file."""
    per_model = load_rankings_json(path)
    matrices = []
    for model in sorted(per_model):
        rankings = per_model[model]
        if len(rankings) < 2:
            raise DataError(
                f"model {model!r} has {len(rankings)} method ranking(s); need >= 2"
            )
        matrices.append(agreement_matrix(rankings, ks=ks, model=model))
    return matrices
