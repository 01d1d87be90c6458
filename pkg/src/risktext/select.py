"""Fisher-score feature ranking, coarse-to-fine K search and leave-one-out evaluation.

The outer loop is leakage free by construction: iteration ``i`` only ever sees
``X`` and ``y`` with row ``i`` deleted, and its fold shuffling is seeded from
``(seed, i)`` alone.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, ValidationError
from .model import ModelSpec, TrainedModel, confusion_counts, f1_for_class, fit, minority_class, predict

logger = logging.getLogger(__name__)

COARSE_GRID = tuple(range(1, 160, 20))
FINE_OFFSETS = (-10, -5, 0, 5, 10)
N_FOLDS = 5


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    user_ids: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        n, d = self.X.shape
        if self.y.shape != (n,):
            raise ValidationError(f"y has shape {self.y.shape}, expected ({n},)")
        if len(self.feature_names) != d or len(self.user_ids) != n:
            raise ValidationError("feature_names/user_ids do not match X")
        if not np.all(np.isfinite(self.X)):
            raise ValidationError("feature matrix contains missing or non-finite values")
        if not np.isin(self.y, (0, 1)).all():
            raise ValidationError("labels must be 0/1")
        if self.y.sum() == 0 or self.y.sum() == n:
            raise DomainError("dataset needs both classes")

    @property
    def groups(self) -> list[str]:
        return [feature_group(name) for name in self.feature_names]


def feature_group(name: str) -> str:
    return name.split(".", 1)[0]


# ---------------------------------------------------------------------------
# Fisher score
# ---------------------------------------------------------------------------

def _fisher_parts(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.shape[0] < 2:
        raise DomainError("Fisher score needs at least two classes")
    # centring first keeps BCV/WCV free of large-offset cancellation
    Xc = X - X.mean(axis=0)
    overall = Xc.mean(axis=0)
    bcv = np.zeros(X.shape[1])
    wcv = np.zeros(X.shape[1])
    within_const = np.ones(X.shape[1], dtype=bool)
    for c in classes:
        Xj = Xc[y == c]
        mj = Xj.mean(axis=0)
        bcv += Xj.shape[0] * (mj - overall) ** 2
        wcv += ((Xj - mj) ** 2).sum(axis=0)
        within_const &= np.ptp(X[y == c], axis=0) == 0.0
    wcv[within_const] = 0.0
    bcv[np.ptp(X, axis=0) == 0.0] = 0.0
    return bcv, wcv


def fisher_scores(X, y) -> np.ndarray:
    """Between-class scatter (BCV) over within-class scatter (WCV) per feature.

    A feature that is constant inside each class but differs between classes
    has WCV = 0 and gets ``inf``; a globally constant feature gets 0.
    """
    bcv, wcv = _fisher_parts(X, y)
    scores = np.zeros_like(bcv)
    finite = wcv > 0.0
    scores[finite] = bcv[finite] / wcv[finite]
    scores[~finite & (bcv > 0.0)] = np.inf
    return scores


def fisher_ranking(X, y) -> np.ndarray:
    """Feature indices, best first.

    Order: infinite scores (by BCV, descending), then finite scores
    descending, ties to the lower index.
    """
    bcv, wcv = _fisher_parts(X, y)
    scores = np.zeros_like(bcv)
    finite = wcv > 0.0
    scores[finite] = bcv[finite] / wcv[finite]
    sentinel = ~finite & (bcv > 0.0)
    secondary = np.where(sentinel, -bcv, 0.0)
    primary = np.where(sentinel, -np.inf, -scores)
    return np.lexsort((np.arange(bcv.shape[0]), secondary, primary))


def top_k(X, y, k: int) -> np.ndarray:
    return fisher_ranking(X, y)[:k]


# ---------------------------------------------------------------------------
# K search
# ---------------------------------------------------------------------------

@dataclass
class SelectionTrace:
    fisher_scores: np.ndarray
    coarse_grid: list[tuple[int, float]]
    fine_grid: list[tuple[int, float]]
    best_k: int
    selected_indices: list[int]
    flagged_folds: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        scores = [None if not np.isfinite(s) else float(s) for s in self.fisher_scores]
        return {
            "fisher_scores": scores,
            "coarse_grid": [[k, f] for k, f in self.coarse_grid],
            "fine_grid": [[k, f] for k, f in self.fine_grid],
            "best_k": self.best_k,
            "selected_indices": list(self.selected_indices),
            "flagged_folds": list(self.flagged_folds),
        }


def stratified_folds(y, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    fold = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.shape[0])]
        fold[idx] = (np.arange(idx.shape[0]) + offset) % n_folds
        offset += idx.shape[0]
    return fold


def coarse_candidates(d: int) -> list[int]:
    return sorted({min(k, d) for k in COARSE_GRID})


def fine_candidates(best_k: int, d: int) -> list[int]:
    return sorted({min(max(best_k + off, 1), d) for off in FINE_OFFSETS})


class _FoldEvaluator:
    """Caches per-fold rankings so each K only costs one fit per fold."""

    def __init__(self, X, y, spec, rng):
        self.X, self.y, self.spec = X, y, spec
        self.positive = minority_class(y)
        self.fold = stratified_folds(y, N_FOLDS, rng)
        self.flagged: set[int] = set()
        self.rankings = []
        for f in range(N_FOLDS):
            tr = self.fold != f
            ytr, yva = y[tr], y[~tr]
            degenerate = np.unique(ytr).shape[0] < 2 or np.unique(yva).shape[0] < 2
            if degenerate:
                self.flagged.add(f)
                self.rankings.append(None)
            else:
                self.rankings.append(fisher_ranking(X[tr], ytr))

    def mean_f1(self, k: int) -> float:
        total = 0.0
        for f in range(N_FOLDS):
            ranking = self.rankings[f]
            if ranking is None:
                continue
            cols = ranking[:k]
            tr = self.fold != f
            model = fit(self.spec, self.X[tr][:, cols], self.y[tr])
            pred = predict(model, self.X[~tr][:, cols])
            total += f1_for_class(pred, self.y[~tr], self.positive)
        return total / N_FOLDS


def _best(grid):
    # max F1, ties toward the smaller K
    return min(grid, key=lambda kf: (-kf[1], kf[0]))[0]


def dac_search(X, y, spec: ModelSpec, seed: int = 0) -> SelectionTrace:
    """Coarse-then-fine search for the number of top Fisher features.

    Each candidate K is scored by the mean minority-class F1 over stratified
    5-fold CV, with Fisher scores recomputed on every fold's training split.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n < 10:
        raise ValidationError(f"dac_search needs at least 10 rows, got {n}")
    evaluator = _FoldEvaluator(X, y, spec, np.random.default_rng(seed))
    coarse = [(k, evaluator.mean_f1(k)) for k in coarse_candidates(d)]
    best_k = _best(coarse)
    seen = {k for k, _ in coarse}
    fine = [(k, evaluator.mean_f1(k)) for k in fine_candidates(best_k, d) if k not in seen]
    best_k = _best(coarse + fine)
    ranking = fisher_ranking(X, y)
    return SelectionTrace(
        fisher_scores=fisher_scores(X, y),
        coarse_grid=coarse,
        fine_grid=fine,
        best_k=int(best_k),
        selected_indices=[int(i) for i in ranking[:best_k]],
        flagged_folds=sorted(evaluator.flagged),
    )


def exhaustive_k_sweep(X, y, spec: ModelSpec, seed: int = 0) -> list[tuple[int, float]]:
    """Score every K in 1..d with the same folds as :func:`dac_search`."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    evaluator = _FoldEvaluator(X, y, spec, np.random.default_rng(seed))
    return [(k, evaluator.mean_f1(k)) for k in range(1, X.shape[1] + 1)]


# ---------------------------------------------------------------------------
# Leave-one-out
# ---------------------------------------------------------------------------

@dataclass
class IterationTrace:
    index: int
    selection: SelectionTrace
    model: TrainedModel
    prediction: int

    def to_dict(self) -> dict:
        return {"index": self.index, "prediction": self.prediction, **self.selection.to_dict()}


@dataclass
class LOOResult:
    predictions: np.ndarray
    truth: np.ndarray
    f1_minority: float
    minority: int
    confusion: tuple[int, int, int, int]
    traces: list[IterationTrace]

    @property
    def mean_k(self) -> float:
        return float(np.mean([t.selection.best_k for t in self.traces]))


def iteration_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def loo_iteration(X, y, spec: ModelSpec, i: int, seed: int = 0) -> IterationTrace:
    """Hold out row ``i``, select and train on the rest, predict row ``i``."""
    keep = np.arange(X.shape[0]) != i
    Xtr, ytr = X[keep], y[keep]
    trace = dac_search(Xtr, ytr, spec, seed=iteration_seed(seed, i))
    cols = np.asarray(trace.selected_indices)
    model = fit(spec, Xtr[:, cols], ytr)
    pred = int(predict(model, X[i:i + 1, cols])[0])
    return IterationTrace(index=i, selection=trace, model=model, prediction=pred)


def _loo_worker(args):
    return loo_iteration(*args)


def loo_evaluate(X, y, spec: ModelSpec, seed: int = 0, n_jobs: int = 1) -> LOOResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if n < 12:
        raise ValidationError(f"loo_evaluate needs at least 12 rows, got {n}")
    minority = minority_class(y)
    jobs = [(X, y, spec, i, seed) for i in range(n)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            traces = list(pool.map(_loo_worker, jobs))
    else:
        traces = [_loo_worker(job) for job in jobs]
    preds = np.array([t.prediction for t in traces], dtype=np.int64)
    return LOOResult(
        predictions=preds,
        truth=y.copy(),
        f1_minority=f1_for_class(preds, y, minority),
        minority=minority,
        confusion=confusion_counts(preds, y, minority),
        traces=traces,
    )


def selection_group_averages(result: LOOResult, feature_names: list[str], groups: list[str]) -> dict[str, float]:
    """Mean over LOO iterations of the number of selected features per group."""
    counts = {g: 0.0 for g in groups}
    for t in result.traces:
        for idx in t.selection.selected_indices:
            g = feature_group(feature_names[idx])
            counts[g] = counts.get(g, 0.0) + 1.0
    n = len(result.traces)
    return {g: c / n for g, c in counts.items()}


def permutation_band(runs, n_perm: int = 2000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Chance band for the mean minority-class F1 over several runs.

    ``runs`` holds ``(predictions, truth)`` pairs. Each permutation shuffles
    every run's truth independently, which keeps both the class balance and
    the prediction balance but destroys any link between them.
    """
    rng = np.random.default_rng(seed)
    runs = [(np.asarray(p), np.asarray(t)) for p, t in runs]
    if not runs:
        raise ValidationError("permutation_band needs at least one run")
    positives = [minority_class(t) for _, t in runs]
    null = np.empty(n_perm)
    for b in range(n_perm):
        null[b] = np.mean([f1_for_class(p, rng.permutation(t), c) for (p, t), c in zip(runs, positives)])
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(null, [tail, 1.0 - tail])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# Relevance reports
# ---------------------------------------------------------------------------

@dataclass
class RelevanceReport:
    group_counts: dict[str, int]
    retained: list[str]
    statistics: np.ndarray
    untestable: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.retained)


def _group_counts(names, keep, groups):
    counts = {g: 0 for g in groups} if groups else {}
    for name, k in zip(names, keep):
        if k:
            g = feature_group(name)
            counts[g] = counts.get(g, 0) + 1
    return counts


def pearson_with_labels(X, y) -> np.ndarray:
    """Pearson r of every column against 0/1 labels; 0 for zero-variance columns."""
    X = np.asarray(X, dtype=np.float64)
    yc = np.asarray(y, dtype=np.float64)
    yc = yc - yc.mean()
    Xc = X - X.mean(axis=0)
    sx = np.sqrt((Xc ** 2).sum(axis=0))
    sy = np.sqrt(yc @ yc)
    r = np.zeros(X.shape[1])
    ok = (sx > 0) & (np.ptp(X, axis=0) > 0) & (sy > 0)
    r[ok] = (Xc[:, ok].T @ yc) / (sx[ok] * sy)
    return np.clip(r, -1.0, 1.0)


def correlation_report(X, y, feature_names, threshold: float = 0.2, groups=None) -> RelevanceReport:
    r = pearson_with_labels(X, y)
    keep = np.abs(r) > threshold
    retained = [n for n, k in zip(feature_names, keep) if k]
    return RelevanceReport(_group_counts(feature_names, keep, groups), retained, r)


def pooled_ttest(a, b) -> tuple[float, float]:
    """Two-sided pooled-variance t-test; ``(t, p)`` with n1 + n2 - 2 dof."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = a.shape[0], b.shape[0]
    dof = n1 + n2 - 2
    diff = a.mean() - b.mean()
    ss = ((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()
    se = np.sqrt(ss / dof * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        return float(np.copysign(np.inf, diff)), 0.0
    t = diff / se
    return float(t), float(2.0 * stats.t.sf(abs(t), dof))


def ttest_report(X, y, feature_names, alpha: float = 0.05, groups=None) -> RelevanceReport:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    g0, g1 = X[y == 0], X[y == 1]
    pvals = np.ones(X.shape[1])
    if g0.shape[0] < 2 or g1.shape[0] < 2:
        return RelevanceReport(_group_counts(feature_names, np.zeros(X.shape[1], bool), groups), [],
                               np.full(X.shape[1], np.nan), untestable=list(feature_names))
    for j in range(X.shape[1]):
        pvals[j] = pooled_ttest(g0[:, j], g1[:, j])[1]
    keep = pvals < alpha
    retained = [n for n, k in zip(feature_names, keep) if k]
    return RelevanceReport(_group_counts(feature_names, keep, groups), retained, pvals)
