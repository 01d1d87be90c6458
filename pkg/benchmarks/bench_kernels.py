"""Compare the compiled and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times one boosted-tree fit and one linear-SVM fit per backend on the same
data and checks that both backends return identical results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from risktext._kernels import available_backends


def make_data(n: int, d: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, :3].sum(axis=1) + rng.normal(size=n) > 0).astype(np.float64)
    return X, y


def bench_gbm(kernels, X, y, n_stages=100, depth=3, lr=0.1):
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    score = np.zeros(X.shape[0])
    values = []
    for _ in range(n_stages):
        prob = 1.0 / (1.0 + np.exp(-score))
        resid, hess = y - prob, prob * (1.0 - prob)
        *_, value, node_of = kernels.fit_tree(X, order, resid, hess, depth)
        score = score + lr * np.asarray(value)[node_of]
        values.append(np.asarray(value))
    return score


def bench_svm(kernels, X, y):
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    w, _ = kernels.svm_dual_cd(Xa, 2.0 * y - 1.0, 1.0, 1000, 1e-3)
    return np.asarray(w)


def best_time(func, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--n", type=int, default=160)
    parser.add_argument("--d", type=int, default=60)
    args = parser.parse_args(argv)

    X, y = make_data(args.n, args.d)
    backends = available_backends()
    rows, outputs = [], {}
    for name, kernels in backends.items():
        t_gbm, gbm = best_time(lambda: bench_gbm(kernels, X, y), args.repeat)
        t_svm, svm = best_time(lambda: bench_svm(kernels, X, y), args.repeat)
        rows.append((name, t_gbm, t_svm))
        outputs[name] = (gbm, svm)

    print(f"n={args.n} d={args.d} repeat={args.repeat} (best of)")
    print(f"{'backend':<8} {'gbm 100 stages':>15} {'svm dual cd':>12}")
    for name, t_gbm, t_svm in rows:
        print(f"{name:<8} {t_gbm * 1e3:>12.1f} ms {t_svm * 1e3:>9.1f} ms")
    if "cython" in outputs:
        py, cy = outputs["python"], outputs["cython"]
        base = dict((r[0], r[1:]) for r in rows)
        print(f"speedup  {base['python'][0] / base['cython'][0]:>14.1f}x {base['python'][1] / base['cython'][1]:>11.1f}x")
        same_gbm = np.array_equal(py[0], cy[0])
        svm_gap = float(np.max(np.abs(py[1] - cy[1])))
        print(f"gbm scores identical: {same_gbm}; max svm weight gap: {svm_gap:.2e}")
    else:
        print("compiled backend unavailable; only the numpy fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
