"""Numba kernels for tree growing, prediction, and Shapley attribution.

Trees are flat parallel arrays: `feature` (-1 at leaves), `threshold`,
`left`/`right` child ids (-1 at leaves), `value` (weighted risk
probability for classification trees, additive margin for boosted trees),
`impurity`, and `cover` (raw training-row count). Ensembles pack the
per-tree arrays back to back with an offsets vector.

The attribution kernel walks every root-to-leaf path once, maintaining the
subset-size weights of the path's feature set incrementally; repeated
splits on one feature are unwound and redone so each feature appears once.
A condition flag (+1 force-present / -1 force-absent) turns the same walk
into the conditioned runs needed for pairwise interaction values.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# splitmix64 constants for the in-kernel feature subsampling RNG
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    state[0] += _SM_GAMMA
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _sample_features(d, mtry, state, out):
    """Partial Fisher-Yates draw of `mtry` distinct features, ascending."""
    for i in range(d):
        out[i] = i
    for i in range(mtry):
        j = i + int(_splitmix64(state) % np.uint64(d - i))
        tmp = out[i]
        out[i] = out[j]
        out[j] = tmp
    sub = out[:mtry]
    sub.sort()
    return sub


@njit(cache=True, nogil=True)
def grow_tree_cls(X, y, w, max_depth, min_samples_leaf, min_samples_split, mtry, seed):
    """Greedy CART on weighted Gini impurity for binary labels.

    Ties between splits break toward the lowest feature index, then the
    lowest threshold (candidates are scanned in that order and only strict
    improvements replace the incumbent).
    """
    n, d = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)
    impurity = np.zeros(max_nodes, np.float64)
    cover = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    scratch = np.empty(n, np.int64)
    vals = np.empty(n, np.float64)
    feat_buf = np.empty(d, np.int64)
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)

    # stack of (node_id, start, end, depth)
    stack = np.empty((4 * n + 8, 4), np.int64)
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = 0
    stack[top, 2] = n
    stack[top, 3] = 0
    top += 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        w_total = 0.0
        w_pos = 0.0
        for i in range(start, end):
            w_total += w[idx[i]]
            w_pos += w[idx[i]] * y[idx[i]]
        p1 = w_pos / w_total
        imp = 2.0 * p1 * (1.0 - p1)
        value[node] = p1
        impurity[node] = imp
        cover[node] = m

        if depth >= max_depth or m < min_samples_split or imp <= 0.0:
            continue

        if mtry >= d:
            cand = feat_buf[:d]
            for i in range(d):
                cand[i] = i
        else:
            cand = _sample_features(d, mtry, state, feat_buf)

        # zero-gain splits are allowed on impure nodes (children may still
        # separate the classes, e.g. XOR); first candidate wins ties, so
        # the scan order fixes the lowest-feature/lowest-threshold rule
        best_gain = -1.0
        best_f = -1
        best_thr = 0.0
        for ci in range(len(cand)):
            f = cand[ci]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m])
            wl = 0.0
            wl_pos = 0.0
            for i in range(m - 1):
                row = idx[start + order[i]]
                wl += w[row]
                wl_pos += w[row] * y[row]
                v_here = vals[order[i]]
                v_next = vals[order[i + 1]]
                if v_next <= v_here:
                    continue
                if i + 1 < min_samples_leaf or m - i - 1 < min_samples_leaf:
                    continue
                wr = w_total - wl
                wr_pos = w_pos - wl_pos
                pl = wl_pos / wl
                pr = wr_pos / wr
                child_imp = 2.0 * wl * pl * (1.0 - pl) + 2.0 * wr * pr * (1.0 - pr)
                gain = imp * w_total - child_imp
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = v_here + 0.5 * (v_next - v_here)
        if best_f < 0:
            continue

        # stable partition of idx[start:end] on the chosen split
        n_left = 0
        for i in range(start, end):
            if X[idx[i], best_f] <= best_thr:
                scratch[n_left] = idx[i]
                n_left += 1
        n_right = 0
        for i in range(start, end):
            if X[idx[i], best_f] > best_thr:
                scratch[n_left + n_right] = idx[i]
                n_right += 1
        for i in range(m):
            idx[start + i] = scratch[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id

        stack[top, 0] = right_id
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        impurity[:n_nodes].copy(),
        cover[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def grow_tree_grad(X, g, h, reg_lambda, max_depth, min_samples_leaf, min_samples_split, mtry, seed):
    """Second-order regression tree on (gradient, hessian) statistics.

    Leaf value is the regularized Newton step -G/(H+lambda); split gain is
    the standard second-order objective improvement. `impurity` stores
    -G^2/(2(H+lambda))/cover so coverage-weighted impurity decrease equals
    the split gain.
    """
    n, d = X.shape
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)
    impurity = np.zeros(max_nodes, np.float64)
    cover = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    scratch = np.empty(n, np.int64)
    vals = np.empty(n, np.float64)
    feat_buf = np.empty(d, np.int64)
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)

    stack = np.empty((4 * n + 8, 4), np.int64)
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = 0
    stack[top, 2] = n
    stack[top, 3] = 0
    top += 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        g_sum = 0.0
        h_sum = 0.0
        for i in range(start, end):
            g_sum += g[idx[i]]
            h_sum += h[idx[i]]
        score = g_sum * g_sum / (h_sum + reg_lambda)
        value[node] = -g_sum / (h_sum + reg_lambda)
        impurity[node] = -0.5 * score / m
        cover[node] = m

        if depth >= max_depth or m < min_samples_split:
            continue

        if mtry >= d:
            cand = feat_buf[:d]
            for i in range(d):
                cand[i] = i
        else:
            cand = _sample_features(d, mtry, state, feat_buf)

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for ci in range(len(cand)):
            f = cand[ci]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m])
            gl = 0.0
            hl = 0.0
            for i in range(m - 1):
                row = idx[start + order[i]]
                gl += g[row]
                hl += h[row]
                v_here = vals[order[i]]
                v_next = vals[order[i + 1]]
                if v_next <= v_here:
                    continue
                if i + 1 < min_samples_leaf or m - i - 1 < min_samples_leaf:
                    continue
                gr = g_sum - gl
                hr = h_sum - hl
                gain = 0.5 * (
                    gl * gl / (hl + reg_lambda)
                    + gr * gr / (hr + reg_lambda)
                    - score
                )
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = v_here + 0.5 * (v_next - v_here)
        if best_f < 0 or best_gain <= 1e-12:
            continue

        n_left = 0
        for i in range(start, end):
            if X[idx[i], best_f] <= best_thr:
                scratch[n_left] = idx[i]
                n_left += 1
        n_right = 0
        for i in range(start, end):
            if X[idx[i], best_f] > best_thr:
                scratch[n_left + n_right] = idx[i]
                n_right += 1
        for i in range(m):
            idx[start + i] = scratch[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id

        stack[top, 0] = right_id
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        impurity[:n_nodes].copy(),
        cover[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, left, right, value, X, out):
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


@njit(cache=True, nogil=True)
def ensemble_predict(feature, threshold, left, right, value, offsets, X, average):
    """Sum (or mean, when `average`) of per-tree leaf values per row.

    Child ids in the packed arrays are global indices (shifted at pack time).
    """
    n = X.shape[0]
    n_trees = len(offsets) - 1
    out = np.zeros(n, np.float64)
    for t in range(n_trees):
        base = offsets[t]
        for r in range(n):
            node = base
            while left[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] += value[node]
    if average and n_trees > 0:
        for r in range(n):
            out[r] /= n_trees
    return out


@njit(cache=True, nogil=True)
def tree_depth(left, right, root):
    """Max depth of the tree rooted at `root` inside packed arrays."""
    stack_node = np.empty(512, np.int64)
    stack_depth = np.empty(512, np.int64)
    top = 0
    stack_node[top] = root
    stack_depth[top] = 0
    top += 1
    best = 0
    while top > 0:
        top -= 1
        node = stack_node[top]
        depth = stack_depth[top]
        if depth > best:
            best = depth
        if left[node] >= 0:
            stack_node[top] = left[node]
            stack_depth[top] = depth + 1
            top += 1
            stack_node[top] = right[node]
            stack_depth[top] = depth + 1
            top += 1
    return best


@njit(cache=True, nogil=True, inline="always")
def _extend_path(pf, pz, po, pw, off, ud, zero_fraction, one_fraction, feature_index):
    pf[off + ud] = feature_index
    pz[off + ud] = zero_fraction
    po[off + ud] = one_fraction
    pw[off + ud] = 1.0 if ud == 0 else 0.0
    for i in range(ud - 1, -1, -1):
        pw[off + i + 1] += one_fraction * pw[off + i] * (i + 1.0) / (ud + 1.0)
        pw[off + i] = zero_fraction * pw[off + i] * (ud - i) / (ud + 1.0)


@njit(cache=True, nogil=True, inline="always")
def _unwind_path(pf, pz, po, pw, off, ud, path_index):
    one_fraction = po[off + path_index]
    zero_fraction = pz[off + path_index]
    next_one = pw[off + ud]
    for i in range(ud - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = pw[off + i]
            pw[off + i] = next_one * (ud + 1.0) / ((i + 1.0) * one_fraction)
            next_one = tmp - pw[off + i] * zero_fraction * (ud - i) / (ud + 1.0)
        else:
            pw[off + i] = pw[off + i] * (ud + 1.0) / (zero_fraction * (ud - i))
    for i in range(path_index, ud):
        pf[off + i] = pf[off + i + 1]
        pz[off + i] = pz[off + i + 1]
        po[off + i] = po[off + i + 1]


@njit(cache=True, nogil=True, inline="always")
def _unwound_sum(pz, po, pw, off, ud, path_index):
    one_fraction = po[off + path_index]
    zero_fraction = pz[off + path_index]
    next_one = pw[off + ud]
    total = 0.0
    for i in range(ud - 1, -1, -1):
        if one_fraction != 0.0:
            tmp = next_one * (ud + 1.0) / ((i + 1.0) * one_fraction)
            total += tmp
            next_one = pw[off + i] - tmp * zero_fraction * (ud - i) / (ud + 1.0)
        else:
            total += pw[off + i] / (zero_fraction * (ud - i) / (ud + 1.0))
    return total


@njit(cache=True, nogil=True)
def shap_one_tree(
    feature, threshold, left, right, value, cover,
    root, x, phi, condition, condition_feature,
    pf, pz, po, pw, st_node, st_ud, st_level, st_pz, st_po, st_pi, st_cf,
):
    """Accumulate one tree's attribution for one instance into `phi`.

    condition = 0 for plain values; +1/-1 force `condition_feature`
    present/absent (used for pairwise interaction values).
    """
    top = 0
    st_node[top] = root
    st_ud[top] = 0
    st_level[top] = 0
    st_pz[top] = 1.0
    st_po[top] = 1.0
    st_pi[top] = -1
    st_cf[top] = 1.0
    top += 1

    while top > 0:
        top -= 1
        node = st_node[top]
        ud = st_ud[top]
        level = st_level[top]
        parent_zero = st_pz[top]
        parent_one = st_po[top]
        parent_feature = st_pi[top]
        cond_frac = st_cf[top]
        if cond_frac == 0.0:
            continue

        off = level * (level + 1) // 2
        if level > 0:
            poff = (level - 1) * level // 2
            for i in range(ud + 1):
                pf[off + i] = pf[poff + i]
                pz[off + i] = pz[poff + i]
                po[off + i] = po[poff + i]
                pw[off + i] = pw[poff + i]
        # When the conditioned feature is the incoming split, the caller
        # already compensated the depth and the path is not extended; in
        # both cases entries 0..ud are valid after this block.
        if condition == 0 or condition_feature != parent_feature:
            _extend_path(pf, pz, po, pw, off, ud, parent_zero, parent_one, parent_feature)

        if left[node] < 0:
            leaf_value = value[node]
            for i in range(1, ud + 1):
                w = _unwound_sum(pz, po, pw, off, ud, i)
                phi[pf[off + i]] += (
                    w * (po[off + i] - pz[off + i]) * leaf_value * cond_frac
                )
            continue

        f = feature[node]
        if x[f] <= threshold[node]:
            hot = left[node]
            cold = right[node]
        else:
            hot = right[node]
            cold = left[node]
        w_node = cover[node]
        hot_zero = cover[hot] / w_node
        cold_zero = cover[cold] / w_node
        incoming_zero = 1.0
        incoming_one = 1.0

        path_index = -1
        for i in range(ud + 1):
            if pf[off + i] == f:
                path_index = i
                break
        if path_index >= 0:
            incoming_zero = pz[off + path_index]
            incoming_one = po[off + path_index]
            _unwind_path(pf, pz, po, pw, off, ud, path_index)
            ud -= 1

        hot_cf = cond_frac
        cold_cf = cond_frac
        if condition > 0 and f == condition_feature:
            cold_cf = 0.0
            ud -= 1
        elif condition < 0 and f == condition_feature:
            hot_cf *= hot_zero
            cold_cf *= cold_zero
            ud -= 1

        st_node[top] = cold
        st_ud[top] = ud + 1
        st_level[top] = level + 1
        st_pz[top] = cold_zero * incoming_zero
        st_po[top] = 0.0
        st_pi[top] = f
        st_cf[top] = cold_cf
        top += 1
        st_node[top] = hot
        st_ud[top] = ud + 1
        st_level[top] = level + 1
        st_pz[top] = hot_zero * incoming_zero
        st_po[top] = incoming_one
        st_pi[top] = f
        st_cf[top] = hot_cf
        top += 1


@njit(cache=True, nogil=True)
def tree_expected_value(left, right, value, cover, root):
    """Coverage-weighted mean leaf value: the tree's base attribution."""
    stack = np.empty(512, np.int64)
    weight = np.empty(512, np.float64)
    top = 0
    stack[top] = root
    weight[top] = 1.0
    top += 1
    total = 0.0
    while top > 0:
        top -= 1
        node = stack[top]
        w = weight[top]
        if left[node] < 0:
            total += w * value[node]
            continue
        w_node = cover[node]
        stack[top] = left[node]
        weight[top] = w * cover[left[node]] / w_node
        top += 1
        stack[top] = right[node]
        weight[top] = w * cover[right[node]] / w_node
        top += 1
    return total


@njit(cache=True, nogil=True)
def ensemble_shap_matrix(
    feature, threshold, left, right, value, cover, offsets, X, d, max_depth
):
    """Plain attribution values for every row; returns (phi_matrix, base)."""
    n = X.shape[0]
    n_trees = len(offsets) - 1
    phi = np.zeros((n, d), np.float64)
    levels = max_depth + 3
    cap = levels * (levels + 1) // 2 + 2
    pf = np.empty(cap, np.int64)
    pz = np.empty(cap, np.float64)
    po = np.empty(cap, np.float64)
    pw = np.empty(cap, np.float64)
    scap = 4 * levels + 8
    st_node = np.empty(scap, np.int64)
    st_ud = np.empty(scap, np.int64)
    st_level = np.empty(scap, np.int64)
    st_pz = np.empty(scap, np.float64)
    st_po = np.empty(scap, np.float64)
    st_pi = np.empty(scap, np.int64)
    st_cf = np.empty(scap, np.float64)

    base = 0.0
    for t in range(n_trees):
        base += tree_expected_value(left, right, value, cover, offsets[t])
    for r in range(n):
        row_phi = phi[r]
        x = X[r]
        for t in range(n_trees):
            shap_one_tree(
                feature, threshold, left, right, value, cover,
                offsets[t], x, row_phi, 0, -1,
                pf, pz, po, pw, st_node, st_ud, st_level, st_pz, st_po, st_pi, st_cf,
            )
    return phi, base


@njit(cache=True, nogil=True)
def ensemble_shap_interactions(
    feature, threshold, left, right, value, cover, offsets, X, d, max_depth
):
    """Pairwise interaction values per row (off-diagonal, unsymmetrized).

    Returns (inter, phi, base): inter[r, i, j] for i != j is the halved
    difference between attribution of j with i forced present vs absent;
    the caller symmetrizes and closes the diagonal against phi.
    """
    n = X.shape[0]
    n_trees = len(offsets) - 1
    inter = np.zeros((n, d, d), np.float64)
    phi = np.zeros((n, d), np.float64)

    used = np.zeros(d, np.int64)
    for k in range(len(feature)):
        if feature[k] >= 0:
            used[feature[k]] = 1

    levels = max_depth + 3
    cap = levels * (levels + 1) // 2 + 2
    pf = np.empty(cap, np.int64)
    pz = np.empty(cap, np.float64)
    po = np.empty(cap, np.float64)
    pw = np.empty(cap, np.float64)
    scap = 4 * levels + 8
    st_node = np.empty(scap, np.int64)
    st_ud = np.empty(scap, np.int64)
    st_level = np.empty(scap, np.int64)
    st_pz = np.empty(scap, np.float64)
    st_po = np.empty(scap, np.float64)
    st_pi = np.empty(scap, np.int64)
    st_cf = np.empty(scap, np.float64)

    on = np.zeros(d, np.float64)
    off_v = np.zeros(d, np.float64)

    base = 0.0
    for t in range(n_trees):
        base += tree_expected_value(left, right, value, cover, offsets[t])

    for r in range(n):
        x = X[r]
        row_phi = phi[r]
        for t in range(n_trees):
            shap_one_tree(
                feature, threshold, left, right, value, cover,
                offsets[t], x, row_phi, 0, -1,
                pf, pz, po, pw, st_node, st_ud, st_level, st_pz, st_po, st_pi, st_cf,
            )
        for i in range(d):
            if used[i] == 0:
                continue
            for j in range(d):
                on[j] = 0.0
                off_v[j] = 0.0
            for t in range(n_trees):
                shap_one_tree(
                    feature, threshold, left, right, value, cover,
                    offsets[t], x, on, 1, i,
                    pf, pz, po, pw, st_node, st_ud, st_level, st_pz, st_po, st_pi, st_cf,
                )
                shap_one_tree(
                    feature, threshold, left, right, value, cover,
                    offsets[t], x, off_v, -1, i,
                    pf, pz, po, pw, st_node, st_ud, st_level, st_pz, st_po, st_pi, st_cf,
                )
            for j in range(d):
                if j != i:
                    inter[r, i, j] = 0.5 * (on[j] - off_v[j])
    return inter, phi, base
