"""Independent brute-force oracles used by the attribution tests.

These deliberately avoid the production code paths: the value function is
a direct recursion over the tree arrays, and attribution values come from
explicit enumeration of all feature subsets.
"""
from itertools import combinations
from math import factorial

import numpy as np


def expected_value_given(tree, x, subset, node=0):
    """Tree-conditioned expectation: follow x on features in `subset`,
    average children by training coverage otherwise."""
    if tree.left[node] < 0:
        return tree.value[node]
    f = int(tree.feature[node])
    if f in subset:
        nxt = tree.left[node] if x[f] <= tree.threshold[node] else tree.right[node]
        return expected_value_given(tree, x, subset, int(nxt))
    wl = tree.cover[tree.left[node]] / tree.cover[node]
    wr = tree.cover[tree.right[node]] / tree.cover[node]
    return wl * expected_value_given(tree, x, subset, int(tree.left[node])) + \
        wr * expected_value_given(tree, x, subset, int(tree.right[node]))


def ensemble_value(model, x, subset):
    total = sum(expected_value_given(t, x, subset) for t in model.trees)
    if model.tree_combine == "mean":
        return total / len(model.trees)
    return total + model.base_margin


def brute_shapley(model, x, d):
    """Exhaustive subset enumeration of the Shapley values."""
    phi = np.zeros(d)
    for i in range(d):
        others = [f for f in range(d) if f != i]
        for r in range(len(others) + 1):
            for subset in combinations(others, r):
                weight = (
                    factorial(len(subset)) * factorial(d - len(subset) - 1) / factorial(d)
                )
                s = set(subset)
                phi[i] += weight * (
                    ensemble_value(model, x, s | {i}) - ensemble_value(model, x, s)
                )
    return phi


def brute_interactions(model, x, d):
    """Exhaustive pairwise interaction index; diagonal closes each row
    against the Shapley values."""
    phi = brute_shapley(model, x, d)
    inter = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            others = [f for f in range(d) if f not in (i, j)]
            for r in range(len(others) + 1):
                for subset in combinations(others, r):
                    weight = (
                        factorial(len(subset))
                        * factorial(d - len(subset) - 2)
                        / (2.0 * factorial(d - 1))
                    )
                    s = set(subset)
                    delta = (
                        ensemble_value(model, x, s | {i, j})
                        - ensemble_value(model, x, s | {i})
                        - ensemble_value(model, x, s | {j})
                        + ensemble_value(model, x, s)
                    )
                    inter[i, j] += weight * delta
    for i in range(d):
        inter[i, i] = phi[i] - inter[i].sum()
    return inter, phi
