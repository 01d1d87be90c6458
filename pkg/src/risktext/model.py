"""Classifiers (logistic regression, linear SVM, gradient boosting) and metrics.

All three are deterministic: the same ``(spec, X, y)`` gives byte-identical
parameters. Linear models standardize their inputs with statistics taken
from the training split only.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import _kernels
from .errors import DomainError, ValidationError

ModelKind = Literal["logistic", "linear_svm", "gbm"]
MODEL_KINDS = ("logistic", "linear_svm", "gbm")


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind = "linear_svm"
    max_iter: int = 1000
    l2: float = 1.0
    C: float = 1.0
    svm_max_epochs: int = 1000
    svm_tol: float = 0.1
    n_stages: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        for name in ("max_iter", "C", "svm_max_epochs", "svm_tol", "n_stages", "learning_rate", "max_depth"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"ModelSpec.{name} must be positive")
        if self.l2 < 0:
            raise ValidationError("ModelSpec.l2 must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown ModelSpec fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainedModel:
    kind: str
    spec: ModelSpec
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray | None = None
    bias: float = 0.0
    init_score: float = 0.0
    trees: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return int(self.mean.shape[0])

    def decision_function(self, X) -> np.ndarray:
        X = _check_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValidationError(f"model was fit on {self.n_features} features, got {X.shape[1]}")
        Z = (X - self.mean) / self.scale
        if self.kind == "gbm":
            score = np.full(X.shape[0], self.init_score)
            for tree in self.trees:
                score += self.spec.learning_rate * _kernels.predict_tree(Z, *tree)
            return score
        return Z @ self.weights + self.bias

    def truncate(self, n_stages: int) -> "TrainedModel":
        """Boosted model using only the first ``n_stages`` trees."""
        if self.kind != "gbm":
            raise ValidationError("truncate applies to gbm models only")
        trees = self.trees[:n_stages]
        return replace(self, trees=trees, n_iter=len(trees), spec=replace(self.spec, n_stages=n_stages))

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "spec": asdict(self.spec),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "n_iter": self.n_iter,
        }
        if self.kind == "gbm":
            out["init_score"] = self.init_score
            out["trees"] = [
                {"feature": t[0].tolist(), "threshold": t[1].tolist(), "left": t[2].tolist(),
                 "right": t[3].tolist(), "value": t[4].tolist()}
                for t in self.trees
            ]
        else:
            out["weights"] = self.weights.tolist()
            out["bias"] = self.bias
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        spec = ModelSpec.from_dict(data["spec"])
        model = cls(kind=data["kind"], spec=spec, mean=np.asarray(data["mean"], dtype=float),
                    scale=np.asarray(data["scale"], dtype=float), n_iter=data.get("n_iter", 0))
        if model.kind == "gbm":
            model.init_score = float(data["init_score"])
            model.trees = [
                (np.asarray(t["feature"], dtype=np.int64), np.asarray(t["threshold"], dtype=float),
                 np.asarray(t["left"], dtype=np.int64), np.asarray(t["right"], dtype=np.int64),
                 np.asarray(t["value"], dtype=float))
                for t in data["trees"]
            ]
        else:
            model.weights = np.asarray(data["weights"], dtype=float)
            model.bias = float(data["bias"])
        return model

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite values")
    return X


def _check_xy(X, y):
    X = _check_matrix(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValidationError(f"label vector shape {y.shape} does not match {X.shape[0]} rows")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    if X.shape[1] < 1:
        raise ValidationError("need at least one feature")
    y = y.astype(np.float64)
    if y.min() == y.max():
        raise DomainError("training labels contain a single class")
    return X, y


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return mean, scale


def logistic_objective(params, X, y, l2):
    """Mean log-loss plus ``l2 / (2n) * ||w||^2`` and its gradient.

    ``params`` is ``[w_1..w_d, b]``; the bias is not penalized.
    """
    n = X.shape[0]
    w, b = params[:-1], params[-1]
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 / n * (w @ w)
    resid = expit(z) - y
    grad = np.empty_like(params)
    grad[:-1] = X.T @ resid / n + l2 / n * w
    grad[-1] = resid.mean()
    return loss, grad


def _fit_logistic(spec, Z, y):
    x0 = np.zeros(Z.shape[1] + 1)
    res = minimize(
        logistic_objective, x0, args=(Z, y, spec.l2), jac=True, method="L-BFGS-B",
        options={"maxiter": spec.max_iter, "gtol": 1e-6, "ftol": 0.0, "maxcor": 10},
    )
    return res.x[:-1].copy(), float(res.x[-1]), int(res.nit)


def _fit_svm(spec, Z, y):
    Za = np.hstack([Z, np.ones((Z.shape[0], 1))])
    w, epochs = _kernels.svm_dual_cd(Za, 2.0 * y - 1.0, float(spec.C), int(spec.svm_max_epochs), float(spec.svm_tol))
    w = np.asarray(w)
    return w[:-1].copy(), float(w[-1]), int(epochs)


def _fit_gbm(spec, X, y):
    p = y.mean()
    init = float(np.log(p / (1.0 - p)))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    score = np.full(X.shape[0], init)
    trees = []
    for _ in range(spec.n_stages):
        prob = expit(score)
        resid = y - prob
        hess = prob * (1.0 - prob)
        feat, thr, left, right, value, node_of = _kernels.fit_tree(X, order, resid, hess, spec.max_depth)
        trees.append((np.asarray(feat), np.asarray(thr), np.asarray(left), np.asarray(right), np.asarray(value)))
        score = score + spec.learning_rate * np.asarray(value)[node_of]
    return init, trees


def fit(spec: ModelSpec, X, y) -> TrainedModel:
    X, y = _check_xy(X, y)
    if spec.kind == "gbm":
        d = X.shape[1]
        init, trees = _fit_gbm(spec, X, y)
        return TrainedModel("gbm", spec, np.zeros(d), np.ones(d), init_score=init, trees=trees, n_iter=len(trees))
    mean, scale = _standardize(X)
    Z = (X - mean) / scale
    if spec.kind == "logistic":
        w, b, nit = _fit_logistic(spec, Z, y)
    else:
        w, b, nit = _fit_svm(spec, Z, y)
    return TrainedModel(spec.kind, spec, mean, scale, weights=w, bias=b, n_iter=nit)


def predict(model: TrainedModel, X) -> np.ndarray:
    """0/1 predictions: positive when the raw score (log-odds for gbm) exceeds 0."""
    return (model.decision_function(X) > 0.0).astype(np.int64)


def minority_class(truth) -> int:
    truth = np.asarray(truth)
    n1 = int((truth == 1).sum())
    n0 = truth.shape[0] - n1
    if n0 == 0 or n1 == 0:
        raise DomainError("truth contains a single class")
    return 0 if n0 < n1 else 1


def confusion_counts(pred, truth, positive: int) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` treating ``positive`` as the positive class."""
    pred = np.asarray(pred) == positive
    truth = np.asarray(truth) == positive
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return tp, fp, fn, int(pred.shape[0]) - tp - fp - fn


def f1_for_class(pred, truth, positive: int) -> float:
    """Harmonic mean of precision and recall; 0 when the class is never hit."""
    tp, fp, fn, _ = confusion_counts(pred, truth, positive)
    # 2PR/(P+R) == 2tp/(2tp+fp+fn), computed with a single rounding
    return 2.0 * tp / (2 * tp + fp + fn) if tp else 0.0


def f1_minority(pred, truth) -> float:
    """F1 of the less frequent class in ``truth`` (ties go to class 1)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError(f"length mismatch: {pred.shape} vs {truth.shape}")
    return f1_for_class(pred, truth, minority_class(truth))


def gradient_check(spec: ModelSpec, X, y, n_points: int = 10, step: float = 1e-5, seed: int = 0) -> float:
    """Worst relative error between the analytic logistic gradient and central differences.

    Evaluated at ``n_points`` random parameter vectors; the relative error at
    one point is ``||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||)``.
    """
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        params = rng.normal(size=X.shape[1] + 1)
        _, analytic = logistic_objective(params, X, y, spec.l2)
        numeric = np.empty_like(params)
        for j in range(params.shape[0]):
            e = np.zeros_like(params)
            e[j] = step
            numeric[j] = (logistic_objective(params + e, X, y, spec.l2)[0]
                          - logistic_objective(params - e, X, y, spec.l2)[0]) / (2.0 * step)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / denom))
    return worst
