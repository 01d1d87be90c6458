import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from risktext.errors import DomainError, ValidationError
from risktext.model import (
    ModelSpec,
    TrainedModel,
    confusion_counts,
    f1_minority,
    fit,
    gradient_check,
    logistic_objective,
    minority_class,
    predict,
)


def blobs(n=40, seed=0, margin=2.0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, 2)) + np.where(y[:, None] == 1, margin, -margin)
    return X, y


def xor(n=200, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[-2, -2], [2, 2], [-2, 2], [2, -2]])
    lab = np.array([0, 0, 1, 1])
    k = rng.integers(0, 4, size=n)
    return centers[k] + rng.normal(scale=0.5, size=(n, 2)), lab[k]


def accuracy(model, X, y):
    return float(np.mean(predict(model, X) == y))


def test_logistic_blobs():
    X, y = blobs()
    assert accuracy(fit(ModelSpec("logistic"), X, y), X, y) >= 0.95


@pytest.mark.parametrize("kind", ["logistic", "linear_svm", "gbm"])
def test_separable_round_trip(kind):
    X, y = blobs(seed=1, margin=4.0)
    m = fit(ModelSpec(kind), X, y)
    assert np.array_equal(predict(m, X), y)
    dup = np.vstack([X[:3], X[:3]])
    p = predict(m, dup)
    assert np.array_equal(p[:3], p[3:])


def test_gbm_captures_xor_logistic_cannot():
    X, y = xor()
    assert accuracy(fit(ModelSpec("gbm"), X, y), X, y) >= 0.9
    assert accuracy(fit(ModelSpec("logistic"), X, y), X, y) <= 0.65


@pytest.mark.parametrize("kind", ["logistic", "linear_svm", "gbm"])
def test_determinism_and_json_round_trip(kind):
    X, y = xor(80, seed=3)
    a, b = fit(ModelSpec(kind), X, y), fit(ModelSpec(kind), X, y)
    assert a.dumps() == b.dumps()
    back = TrainedModel.from_dict(json.loads(a.dumps()))
    np.testing.assert_array_equal(back.decision_function(X), a.decision_function(X))


def test_gbm_truncation_matches_shorter_training():
    X, y = xor(120, seed=4)
    full = fit(ModelSpec("gbm", n_stages=60), X, y)
    short = fit(ModelSpec("gbm", n_stages=25), X, y)
    assert full.truncate(25).dumps() == short.dumps()


def test_logistic_scaling_invariance():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 4))
    y = (X @ [1.0, -0.5, 0.3, 0.0] + rng.normal(scale=0.8, size=60) > 0).astype(int)
    Xs = X.copy()
    Xs[:, 1] *= 10.0
    a, b = fit(ModelSpec("logistic"), X, y), fit(ModelSpec("logistic"), Xs, y)
    np.testing.assert_allclose(a.decision_function(X), b.decision_function(Xs), atol=1e-6)
    assert np.array_equal(predict(a, X), predict(b, Xs))


def test_standardization_uses_train_split_only():
    X, y = blobs(seed=6)
    m = fit(ModelSpec("linear_svm"), X, y)
    np.testing.assert_allclose(m.mean, X.mean(axis=0))
    np.testing.assert_allclose(m.scale, X.std(axis=0))


def test_constant_feature_is_harmless():
    X, y = blobs(seed=7)
    X = np.hstack([X, np.full((X.shape[0], 1), 3.0)])
    for kind in ("logistic", "linear_svm", "gbm"):
        assert accuracy(fit(ModelSpec(kind), X, y), X, y) >= 0.9


def test_input_validation():
    X, y = blobs()
    with pytest.raises(ValidationError):
        fit(ModelSpec("logistic"), np.where(X > 1, np.nan, X), y)
    with pytest.raises(DomainError):
        fit(ModelSpec("logistic"), X, np.ones_like(y))
    m = fit(ModelSpec("logistic"), X, y)
    with pytest.raises(ValidationError):
        predict(m, X[:, :1])
    with pytest.raises(ValidationError):
        ModelSpec("forest")
    with pytest.raises(ValidationError):
        ModelSpec("gbm", n_stages=0)
    with pytest.raises(ValidationError):
        ModelSpec.from_dict({"kind": "gbm", "trees": 3})


def test_svm_objective_is_near_optimal():
    """Dual coordinate descent lands on the primal optimum of 1/2|w|^2 + C sum hinge."""
    from scipy.optimize import minimize

    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 3))
    y = (X[:, 0] + 0.7 * rng.normal(size=50) > 0).astype(int)
    m = fit(ModelSpec("linear_svm", svm_tol=1e-6, svm_max_epochs=20000), X, y)
    Z = np.hstack([(X - m.mean) / m.scale, np.ones((50, 1))])
    s = 2.0 * y - 1.0

    def primal(wb):
        return 0.5 * wb @ wb + np.maximum(0.0, 1.0 - s * (Z @ wb)).sum()

    got = primal(np.append(m.weights, m.bias))
    ref = min(primal(minimize(primal, x0, method="Powell", options={"xtol": 1e-10, "ftol": 1e-12,
                                                                     "maxiter": 200000}).x)
              for x0 in (np.zeros(4), np.append(m.weights, m.bias)))
    assert got <= ref + 1e-4


def test_gradient_check_examples():
    rng = np.random.default_rng(9)
    X, y = rng.normal(size=(20, 5)), (rng.random(20) < 0.5).astype(float)
    assert gradient_check(ModelSpec("logistic"), X, y) < 1e-4
    Xc = X - X.mean(axis=0)
    yb = np.array([0.0, 1.0] * 10)
    _, g = logistic_objective(np.zeros(6), Xc, yb, 1.0)
    assert abs(g[-1]) < 1e-15
    w = rng.normal(size=6)
    _, g0 = logistic_objective(w, X, y, 0.0)
    _, g1 = logistic_objective(w, X, y, 2.5)
    np.testing.assert_allclose(g1[:-1] - g0[:-1], 2.5 * w[:-1] / 20, rtol=1e-12)
    assert g1[-1] == g0[-1]


def test_f1_hand_cases():
    truth = np.array([0] * 40 + [1] * 60)
    assert f1_minority(truth, truth) == 1.0
    assert f1_minority(np.zeros(100, int), truth) == pytest.approx(2 * 0.4 / 1.4)
    assert f1_minority(np.ones(100, int), truth) == 0.0
    assert minority_class([0, 1]) == 1
    assert confusion_counts([1, 1, 0, 0], [1, 0, 1, 0], 1) == (1, 1, 1, 1)
    with pytest.raises(DomainError):
        f1_minority([0, 1], [1, 1])
    with pytest.raises(ValidationError):
        f1_minority([0, 1, 0], [0, 1])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=50))
def test_f1_range(pairs):
    pred, truth = map(np.array, zip(*pairs))
    if truth.min() == truth.max():
        return
    assert 0.0 <= f1_minority(pred, truth) <= 1.0


def test_agrees_with_sklearn_where_available():
    sk = pytest.importorskip("sklearn.linear_model")
    from sklearn.preprocessing import StandardScaler

    rng = np.random.default_rng(10)
    X = rng.normal(size=(80, 6))
    y = (X[:, :2].sum(axis=1) + rng.normal(size=80) > 0).astype(int)
    Z = StandardScaler().fit_transform(X)
    # mean log-loss + (1/2n)|w|^2 is sklearn's objective with C = 1 divided by n
    ref = sk.LogisticRegression(C=1.0, tol=1e-10, max_iter=10000).fit(Z, y)
    m = fit(ModelSpec("logistic"), X, y)
    np.testing.assert_allclose(m.weights, ref.coef_[0], atol=1e-5)
    assert m.bias == pytest.approx(ref.intercept_[0], abs=1e-5)
