"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation: running sums are
accumulated sequentially in the same order, so both backends produce the
same trees and weights on the same input (up to libm differences).
"""

from __future__ import annotations

import numpy as np


def _seq_sum(values: np.ndarray) -> float:
    # cumsum is strictly sequential, unlike np.sum's pairwise reduction
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def fit_tree(X, order, residual, hessian, max_depth):
    """Grow one least-squares regression tree level by level.

    Returns ``(feature, threshold, left, right, value, node_of)`` where
    ``feature[k] == -1`` marks a leaf and ``node_of`` maps each training row
    to its leaf.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    max_nodes = (1 << (max_depth + 1)) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes, dtype=np.float64)
    node_of = np.zeros(n, dtype=np.int64)
    XT = np.ascontiguousarray(X.T)
    n_nodes = 1
    level = [0]

    for _ in range(max_depth):
        next_level = []
        for k in level:
            in_node = node_of == k
            nk = int(in_node.sum())
            if nk < 2:
                continue
            sub = order[in_node[order]].reshape(d, nk)
            vals = np.take_along_axis(XT, sub, axis=1)
            csum = np.cumsum(residual[sub], axis=1)
            total = _seq_sum(residual[np.flatnonzero(in_node)])
            sl = csum[:, :-1]
            nl = np.arange(1, nk, dtype=np.float64)
            sr = total - sl
            nr = nk - nl
            gain = sl * sl / nl + sr * sr / nr - total * total / nk
            gain = np.where(vals[:, 1:] > vals[:, :-1], gain, -np.inf)
            flat = int(np.argmax(gain))
            best = gain.flat[flat]
            if not best > 0.0:
                continue
            f, j = divmod(flat, nk - 1)
            lo, hi = vals[f, j], vals[f, j + 1]
            thr = (lo + hi) / 2.0
            if thr >= hi:
                thr = lo
            feature[k] = f
            threshold[k] = thr
            left[k], right[k] = n_nodes, n_nodes + 1
            rows = np.flatnonzero(in_node)
            goes_left = X[rows, f] <= thr
            node_of[rows[goes_left]] = n_nodes
            node_of[rows[~goes_left]] = n_nodes + 1
            next_level.extend((n_nodes, n_nodes + 1))
            n_nodes += 2
        if not next_level:
            break
        level = next_level

    for k in range(n_nodes):
        if feature[k] >= 0:
            continue
        rows = np.flatnonzero(node_of == k)
        h = _seq_sum(hessian[rows])
        value[k] = _seq_sum(residual[rows]) / h if h > 1e-150 else 0.0
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], node_of


def predict_tree(X, feature, threshold, left, right, value):
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    while True:
        f = feature[node]
        inner = f >= 0
        if not inner.any():
            break
        go_left = X[rows, np.where(inner, f, 0)] <= threshold[node]
        node = np.where(inner, np.where(go_left, left[node], right[node]), node)
    return value[node]


def svm_dual_cd(X, y, C, max_iter, tol):
    """Dual coordinate descent for the hinge-loss linear SVM, with shrinking.

    ``X`` already carries the bias column; ``y`` is in {-1, +1}. Active
    samples are visited in a fixed cyclic order. A sample whose dual variable
    sits at a bound with a gradient pointing outward (judged against the
    previous epoch's projected-gradient range) leaves the active set; before
    stopping, the full set is restored and rechecked. Returns ``(w, n_epochs)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    w = np.zeros(p)
    alpha = np.zeros(n)
    qdiag = np.einsum("ij,ij->i", X, X)
    index = list(range(n))
    active = n
    old_max, old_min = np.inf, -np.inf
    epoch = 0
    while epoch < max_iter:
        epoch += 1
        pg_max, pg_min = -np.inf, np.inf
        s = 0
        while s < active:
            i = index[s]
            xi = X[i]
            g = y[i] * float(xi @ w) - 1.0
            a = alpha[i]
            pg = 0.0
            if a == 0.0:
                if g > old_max:
                    active -= 1
                    index[s], index[active] = index[active], index[s]
                    continue
                if g < 0.0:
                    pg = g
            elif a == C:
                if g < old_min:
                    active -= 1
                    index[s], index[active] = index[active], index[s]
                    continue
                if g > 0.0:
                    pg = g
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if abs(pg) > 1e-12:
                new = min(max(a - g / qdiag[i], 0.0), C)
                alpha[i] = new
                w += ((new - a) * y[i]) * xi
            s += 1
        if pg_max - pg_min < tol:
            if active == n:
                break
            active = n
            old_max, old_min = np.inf, -np.inf
            continue
        old_max = pg_max if pg_max > 0.0 else np.inf
        old_min = pg_min if pg_min < 0.0 else -np.inf
    return w, epoch
