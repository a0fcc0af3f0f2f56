"""Pure numpy implementations of the hot kernels.

This module is the fallback when the compiled ``_native`` extension is not
available. Both backends must return bit-identical arrays, so every float
reduction here is either exact or done sequentially in sample order
(``np.bincount`` and ``np.cumsum`` are sequential; ``ndarray.sum`` is not).
"""

from __future__ import annotations

import numpy as np

from .seeding import MASK64, child_key, mix64, permutation, unit_interval

GINI, MSE = 0, 1

FEATURE_SALT = 0x5851F42D4C957F2D
SPLIT_SALT = 0x14057B7EF767814F


def _seq_sum(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return float(np.bincount(np.zeros(values.size, dtype=np.intp), weights=values)[0])


def _node_stats(idx, y, n_classes, target, weights, criterion):
    w = weights[idx]
    if criterion == GINI:
        counts = np.bincount(y[idx], weights=w, minlength=n_classes)
        total = 0.0
        sq = 0.0
        for k in range(n_classes):
            total += counts[k]
            sq += counts[k] * counts[k]
        pure = np.count_nonzero(counts > 0) <= 1
        return total, sq / total, pure
    total = _seq_sum(w)
    s = _seq_sum(w * target[idx])
    r = target[idx]
    pure = bool(r.min() == r.max())
    return total, s * s / total, pure


def _feature_split(col, idx, y, n_classes, target, weights, criterion, min_leaf):
    """Best boundary for one feature: (score, code_left_max) or None."""
    present, inv = np.unique(col, return_inverse=True)
    nb = present.size
    if nb < 2:
        return None
    w = weights[idx]
    if criterion == GINI:
        yy = y[idx]
        hist = np.zeros((nb, n_classes))
        for k in range(n_classes):
            m = yy == k
            if m.any():
                hist[:, k] = np.bincount(inv[m], weights=w[m], minlength=nb)
        bin_w = hist[:, 0].copy()
        for k in range(1, n_classes):
            bin_w = bin_w + hist[:, k]
        cl = np.cumsum(hist, axis=0)
        wl = np.cumsum(bin_w)
        tot = cl[-1]
        wt = wl[-1]
        cl, wl = cl[:-1], wl[:-1]
        wr = wt - wl
        cr = tot - cl
        a = cl[:, 0] * cl[:, 0]
        b = cr[:, 0] * cr[:, 0]
        for k in range(1, n_classes):
            a = a + cl[:, k] * cl[:, k]
            b = b + cr[:, k] * cr[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            score = (a * wr + b * wl) / (wl * wr)
    else:
        bin_w = np.bincount(inv, weights=w, minlength=nb)
        bin_s = np.bincount(inv, weights=w * target[idx], minlength=nb)
        wl = np.cumsum(bin_w)
        sl = np.cumsum(bin_s)
        wt, st = wl[-1], sl[-1]
        wl, sl = wl[:-1], sl[:-1]
        wr = wt - wl
        sr = st - sl
        with np.errstate(divide="ignore", invalid="ignore"):
            score = (sl * sl * wr + sr * sr * wl) / (wl * wr)
    valid = (wl >= min_leaf) & (wr >= min_leaf)
    if not valid.any():
        return -1.0, None, None
    score = np.where(valid, score, -np.inf)
    pos = int(np.argmax(score))
    return float(score[pos]), int(present[pos]), int(present[pos + 1])


def build_tree(codes, n_bins, values, offsets, y, n_classes, target, weights, criterion,
               max_depth, min_samples_split, min_samples_leaf, max_features, seed):
    """Grow one CART tree on rank-coded features.

    Returns ``(feature, threshold, left, right, decrease, node_weight,
    leaf_of_sample)``; leaves have ``feature == -1``. Nodes are numbered in
    preorder with the left child first.
    """
    n, d = codes.shape
    feature, threshold, left, right, decrease, node_w = [], [], [], [], [], []
    leaf_of = np.full(n, -1, dtype=np.int64)
    root = np.flatnonzero(weights > 0)
    stack = [(root, 0, seed & MASK64, -1, 0)]
    while stack:
        idx, depth, key, parent, side = stack.pop()
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        decrease.append(0.0)
        if parent >= 0:
            (left if side == 1 else right)[parent] = nid
        w_node, parent_score, pure = _node_stats(idx, y, n_classes, target, weights, criterion)
        node_w.append(w_node)
        if depth >= max_depth or w_node < min_samples_split or pure:
            leaf_of[idx] = nid
            continue
        order = range(d) if max_features >= d else permutation(key, d)
        best = None
        visited = 0
        for f in order:
            col = codes[idx, f]
            res = _feature_split(col, idx, y, n_classes, target, weights, criterion,
                                 min_samples_leaf)
            if res is None:
                continue
            visited += 1
            score, code_a, code_b = res
            if code_a is not None and (best is None or score > best[0]
                                       or (score == best[0] and f < best[1])):
                best = (score, f, code_a, code_b)
            if visited >= max_features:
                break
        if best is None:
            leaf_of[idx] = nid
            continue
        score, f, code_a, code_b = best
        va = values[offsets[f] + code_a]
        vb = values[offsets[f] + code_b]
        thr = (va + vb) * 0.5
        if thr >= vb:
            thr = va
        feature[nid] = f
        threshold[nid] = thr
        decrease[nid] = max(score - parent_score, 0.0)
        mask = codes[idx, f] <= code_a
        stack.append((idx[~mask], depth + 1, child_key(key, 2), nid, 2))
        stack.append((idx[mask], depth + 1, child_key(key, 1), nid, 1))
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(decrease, dtype=np.float64), np.array(node_w, dtype=np.float64),
            leaf_of)


def apply_tree(feature, threshold, left, right, X):
    """Leaf index reached by every row of X (x <= threshold goes left)."""
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        nd = node[active]
        go_left = X[active, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return node


def build_itree(Xs, height_limit, key):
    """Grow one isolation tree on the subsample ``Xs`` (m x d).

    Returns ``(feature, threshold, left, right, size, depth)``; a point goes
    left when ``x[feature] < threshold``.
    """
    Xs = np.asarray(Xs, dtype=np.float64)
    rows = Xs.tolist()
    d = Xs.shape[1]
    feature, threshold, left, right, size, depth_out = [], [], [], [], [], []
    stack = [(list(range(len(rows))), 0, key & MASK64, -1, 0)]
    while stack:
        idx, depth, k, parent, side = stack.pop()
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(len(idx))
        depth_out.append(depth)
        if parent >= 0:
            (left if side == 1 else right)[parent] = nid
        if depth >= height_limit or len(idx) <= 1:
            continue
        lo = list(rows[idx[0]])
        hi = list(rows[idx[0]])
        for i in idx[1:]:
            r = rows[i]
            for j in range(d):
                if r[j] < lo[j]:
                    lo[j] = r[j]
                elif r[j] > hi[j]:
                    hi[j] = r[j]
        spread = [j for j in range(d) if lo[j] < hi[j]]
        if not spread:
            continue
        j = spread[mix64(k ^ FEATURE_SALT) % len(spread)]
        u = unit_interval(mix64(k ^ SPLIT_SALT))
        v = lo[j] + u * (hi[j] - lo[j])
        if v <= lo[j]:
            v = hi[j]
        feature[nid] = j
        threshold[nid] = v
        li = [i for i in idx if rows[i][j] < v]
        ri = [i for i in idx if rows[i][j] >= v]
        stack.append((ri, depth + 1, child_key(k, 2), nid, 2))
        stack.append((li, depth + 1, child_key(k, 1), nid, 1))
    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(size, dtype=np.int64), np.array(depth_out, dtype=np.int64))


def forest_path_length(feature, threshold, left, right, terminal, tree_offsets, X):
    """Sum over trees of the terminal value reached by each row of X.

    Node arrays are concatenated over trees; child indices are tree-local.
    ``terminal[node]`` is the depth plus the external-node size adjustment.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    total = np.zeros(n, dtype=np.float64)
    for t in range(len(tree_offsets) - 1):
        off = tree_offsets[t]
        node = np.zeros(n, dtype=np.int64)
        active = np.flatnonzero(feature[off + node] >= 0)
        while active.size:
            nd = node[active] + off
            go_left = X[active, feature[nd]] < threshold[nd]
            node[active] = np.where(go_left, left[nd], right[nd])
            active = active[feature[off + node[active]] >= 0]
        total = total + terminal[off + node]
    return total
