import numpy as np
import pytest

from risktext import _kernels
from risktext._kernels import _pykernels

BACKENDS = _kernels.available_backends()
needs_c = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def _tree_data(seed, n=60, d=5):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, d)), 1)  # rounding forces threshold ties
    resid = rng.normal(size=n)
    hess = rng.uniform(0.05, 0.25, size=n)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    return X, order, resid, hess


def test_backend_selected():
    assert _kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@needs_c
@pytest.mark.parametrize("seed", range(5))
def test_tree_kernels_agree(seed):
    from risktext._kernels import _ckernels

    X, order, resid, hess = _tree_data(seed)
    py = _pykernels.fit_tree(X, order, resid, hess, 3)
    c = _ckernels.fit_tree(X, order, resid, hess, 3)
    for a, b in zip(py, c):
        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))
    np.testing.assert_array_equal(_pykernels.predict_tree(X, *py[:5]), np.asarray(_ckernels.predict_tree(X, *c[:5])))


@needs_c
@pytest.mark.parametrize("seed", range(5))
def test_svm_kernels_agree(seed):
    from risktext._kernels import _ckernels

    rng = np.random.default_rng(seed)
    X = np.hstack([rng.normal(size=(40, 6)), np.ones((40, 1))])
    y = np.where(rng.random(40) < 0.5, -1.0, 1.0)
    wp, ep = _pykernels.svm_dual_cd(X, y, 1.0, 200, 1e-3)
    wc, ec = _ckernels.svm_dual_cd(X, y, 1.0, 200, 1e-3)
    assert ep == ec
    np.testing.assert_allclose(np.asarray(wc), wp, rtol=1e-12, atol=1e-13)


def test_tree_split_is_greedy_best():
    X = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 6.0], [3.0, 6.0]])
    resid = np.array([-1.0, -1.0, 1.0, 1.0])
    hess = np.full(4, 0.25)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    feature, threshold, left, right, value, node_of = _pykernels.fit_tree(X, order, resid, hess, 1)
    # both features separate perfectly: the tie goes to feature 0
    assert feature[0] == 0 and threshold[0] == 1.5
    assert value[node_of[0]] == pytest.approx(-4.0) and value[node_of[3]] == pytest.approx(4.0)
