# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of ``_pykernels``: regression-tree growth and SVM dual CD."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def fit_tree(X, order, residual, hessian, int max_depth):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] ordv = np.ascontiguousarray(order, dtype=np.int64)
    cdef double[::1] r = np.ascontiguousarray(residual, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(hessian, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t max_nodes = (1 << (max_depth + 1)) - 1

    feature_a = np.full(max_nodes, -1, dtype=np.int64)
    threshold_a = np.zeros(max_nodes, dtype=np.float64)
    left_a = np.full(max_nodes, -1, dtype=np.int64)
    right_a = np.full(max_nodes, -1, dtype=np.int64)
    value_a = np.zeros(max_nodes, dtype=np.float64)
    node_of_a = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef cnp.int64_t[::1] left = left_a
    cdef cnp.int64_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef cnp.int64_t[::1] node_of = node_of_a

    # per-node scratch, indexed by node id
    cdef double[::1] tot = np.zeros(max_nodes)
    cdef cnp.int64_t[::1] cnt = np.zeros(max_nodes, dtype=np.int64)
    cdef cnp.int64_t[::1] active = np.zeros(max_nodes, dtype=np.int64)
    cdef double[::1] best_gain = np.zeros(max_nodes)
    cdef cnp.int64_t[::1] best_f = np.zeros(max_nodes, dtype=np.int64)
    cdef double[::1] best_thr = np.zeros(max_nodes)
    cdef double[::1] run_sum = np.zeros(max_nodes)
    cdef cnp.int64_t[::1] run_cnt = np.zeros(max_nodes, dtype=np.int64)
    cdef double[::1] last = np.zeros(max_nodes)

    cdef Py_ssize_t n_nodes = 1, level_start = 0, level_end = 1
    cdef Py_ssize_t depth, k, f, j, s
    cdef cnp.int64_t node
    cdef double v, sl, sr, nl, nr, gain, thr, S, N, hs
    cdef bint any_active, any_split

    for depth in range(max_depth):
        any_active = False
        for k in range(level_start, level_end):
            tot[k] = 0.0
            cnt[k] = 0
        for s in range(n):
            node = node_of[s]
            if level_start <= node < level_end:
                tot[node] += r[s]
                cnt[node] += 1
        for k in range(level_start, level_end):
            active[k] = 1 if cnt[k] >= 2 else 0
            best_gain[k] = 0.0
            best_f[k] = -1
            if active[k]:
                any_active = True
        if not any_active:
            break
        for f in range(d):
            for k in range(level_start, level_end):
                run_sum[k] = 0.0
                run_cnt[k] = 0
            for j in range(n):
                s = ordv[f, j]
                node = node_of[s]
                if node < level_start or node >= level_end or not active[node]:
                    continue
                v = x[s, f]
                if run_cnt[node] > 0 and v > last[node]:
                    S = tot[node]
                    N = <double>cnt[node]
                    sl = run_sum[node]
                    nl = <double>run_cnt[node]
                    sr = S - sl
                    nr = N - nl
                    gain = sl * sl / nl + sr * sr / nr - S * S / N
                    if gain > best_gain[node]:
                        best_gain[node] = gain
                        best_f[node] = f
                        thr = (last[node] + v) / 2.0
                        if thr >= v:
                            thr = last[node]
                        best_thr[node] = thr
                run_sum[node] += r[s]
                run_cnt[node] += 1
                last[node] = v
        any_split = False
        new_start = n_nodes
        for k in range(level_start, level_end):
            if best_f[k] < 0:
                continue
            feature[k] = best_f[k]
            threshold[k] = best_thr[k]
            left[k] = n_nodes
            right[k] = n_nodes + 1
            n_nodes += 2
            any_split = True
        if not any_split:
            break
        for s in range(n):
            node = node_of[s]
            if level_start <= node < level_end and feature[node] >= 0:
                if x[s, feature[node]] <= threshold[node]:
                    node_of[s] = left[node]
                else:
                    node_of[s] = right[node]
        level_start = new_start
        level_end = n_nodes

    for k in range(n_nodes):
        tot[k] = 0.0
        best_gain[k] = 0.0
    for s in range(n):
        node = node_of[s]
        tot[node] += r[s]
        best_gain[node] += h[s]
    for k in range(n_nodes):
        if feature[k] < 0:
            hs = best_gain[k]
            value[k] = tot[k] / hs if hs > 1e-150 else 0.0

    return (feature_a[:n_nodes], threshold_a[:n_nodes], left_a[:n_nodes],
            right_a[:n_nodes], value_a[:n_nodes], node_of_a)


def predict_tree(X, feature, threshold, left, right, value):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] feat = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] thr = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef cnp.int64_t[::1] lft = np.ascontiguousarray(left, dtype=np.int64)
    cdef cnp.int64_t[::1] rgt = np.ascontiguousarray(right, dtype=np.int64)
    cdef double[::1] val = np.ascontiguousarray(value, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], i
    cdef cnp.int64_t node
    out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if x[i, feat[node]] <= thr[node]:
                node = lft[node]
            else:
                node = rgt[node]
        out[i] = val[node]
    return out_a


def svm_dual_cd(X, y, double C, int max_iter, double tol):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], p = x.shape[1], i, j, s, active, tmp
    w_a = np.zeros(p)
    cdef double[::1] w = w_a
    cdef double[::1] alpha = np.zeros(n)
    cdef double[::1] qdiag = np.zeros(n)
    cdef Py_ssize_t[::1] index = np.arange(n, dtype=np.intp)
    cdef double g, a, pg, pg_max, pg_min, new, step
    cdef double old_max = INFINITY, old_min = -INFINITY
    cdef int epoch = 0

    for i in range(n):
        g = 0.0
        for j in range(p):
            g += x[i, j] * x[i, j]
        qdiag[i] = g

    active = n
    while epoch < max_iter:
        epoch += 1
        pg_max = -INFINITY
        pg_min = INFINITY
        s = 0
        while s < active:
            i = index[s]
            g = 0.0
            for j in range(p):
                g += x[i, j] * w[j]
            g = yy[i] * g - 1.0
            a = alpha[i]
            pg = 0.0
            if a == 0.0:
                if g > old_max:
                    active -= 1
                    tmp = index[s]; index[s] = index[active]; index[active] = tmp
                    continue
                if g < 0.0:
                    pg = g
            elif a == C:
                if g < old_min:
                    active -= 1
                    tmp = index[s]; index[s] = index[active]; index[active] = tmp
                    continue
                if g > 0.0:
                    pg = g
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if fabs(pg) > 1e-12:
                new = a - g / qdiag[i]
                if new < 0.0:
                    new = 0.0
                elif new > C:
                    new = C
                alpha[i] = new
                step = (new - a) * yy[i]
                for j in range(p):
                    w[j] += step * x[i, j]
            s += 1
        if pg_max - pg_min < tol:
            if active == n:
                break
            active = n
            old_max = INFINITY
            old_min = -INFINITY
            continue
        old_max = pg_max if pg_max > 0.0 else INFINITY
        old_min = pg_min if pg_min < 0.0 else -INFINITY
    return w_a, epoch
