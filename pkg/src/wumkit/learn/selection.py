"""Training dispatch, stratified folds and cross-validated grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..core import ConfigError, DataError, FeatureMatrix
from ..seeding import derive
from .linear import train_logistic_regression
from .model import TrainedModel, predict
from .params import GridSearchSpec, canonical_kind, resolve, to_params
from .svm import train_svm_rbf
from .trees import train_cart, train_gradient_boosting, train_random_forest


def fit(matrix: FeatureMatrix, kind: str, hyperparameters: dict | None = None, seed: int = 0,
        n_jobs: int = 1) -> TrainedModel:
    """Train any model family from a flat hyperparameter dict (defaults filled in)."""
    kind = canonical_kind(kind)
    hp = resolve(kind, hyperparameters)
    params = to_params(kind, hp, seed)
    if kind == "cart":
        model = train_cart(matrix, params, seed)
    elif kind == "random_forest":
        model = train_random_forest(matrix, params, n_jobs=n_jobs)
    elif kind == "gradient_boosting":
        model = train_gradient_boosting(matrix, params, n_jobs=n_jobs)
    elif kind == "logistic_regression":
        model = train_logistic_regression(matrix, params, seed)
    else:
        model = train_svm_rbf(matrix, params, seed)
    model.hyperparameters = hp
    return model


def stratified_folds(labels: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per row: each class is shuffled then dealt round-robin."""
    labels = np.asarray(labels)
    counts = np.bincount(labels) if labels.size else np.zeros(0, dtype=int)
    small = [c for c, n in enumerate(counts) if 0 < n < k]
    if small:
        raise DataError(f"classes {small} have fewer than {k} members; use a smaller fold count")
    fold = np.empty(len(labels), dtype=np.int64)
    for c in np.flatnonzero(counts):
        idx = np.flatnonzero(labels == c)
        idx = idx[np.random.default_rng(derive(seed, c)).permutation(len(idx))]
        fold[idx] = np.arange(len(idx)) % k
    return fold


def plain_folds(n: int, k: int, seed: int = 0) -> np.ndarray:
    if n < k:
        raise DataError(f"{n} rows cannot form {k} folds")
    order = np.random.default_rng(derive(seed, 0)).permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[order] = np.arange(n) % k
    return fold


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    return float(np.count_nonzero(y_true == np.asarray(y_pred))) / len(y_true)


def cross_val_scores(matrix: FeatureMatrix, kind: str, hyperparameters: dict,
                     folds: np.ndarray, seed: int = 0, n_jobs: int = 1) -> list[float]:
    scores = []
    for f in range(int(folds.max()) + 1):
        test = folds == f
        model = fit(matrix.take(np.flatnonzero(~test)), kind, hyperparameters, seed, n_jobs)
        held = matrix.take(np.flatnonzero(test))
        scores.append(accuracy(held.labels, predict(model, held)))
    return scores


def mean_score(scores: list[float]) -> float:
    total = 0.0
    for s in scores:
        total += s
    return total / len(scores)


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    table: list[dict]  # one row per grid point: params, fold_scores, mean_score
    folds: np.ndarray


def _tie_key(row: dict, index: int):
    p = row["params"]

    def num(name):
        v = p.get(name)
        return float("inf") if v is None else float(v)

    return (-row["mean_score"], num("n_estimators"), num("max_depth"), num("C"), index)


def grid_search(matrix: FeatureMatrix, kind: str, spec: GridSearchSpec,
                base: dict | None = None, n_jobs: int = 1) -> GridResult:
    """Evaluate every grid point on one shared fold partition.

    The best point maximises mean fold accuracy; ties go to fewer
    estimators, then shallower depth, then lower C, then grid order.
    """
    kind = canonical_kind(kind)
    for name in spec.grid:
        resolve(kind, {name: spec.grid[name][0]})
    if spec.stratified:
        folds = stratified_folds(matrix.labels, spec.folds, spec.seed)
    else:
        folds = plain_folds(matrix.n_rows, spec.folds, spec.seed)
    names = list(spec.grid)
    table = []
    for combo in itertools.product(*(spec.grid[n] for n in names)):
        point = dict(base or {})
        point.update(zip(names, combo))
        scores = cross_val_scores(matrix, kind, point, folds, spec.seed, n_jobs)
        table.append({"params": dict(zip(names, combo)), "fold_scores": scores,
                      "mean_score": mean_score(scores)})
    if not table:
        raise ConfigError("empty grid")
    best_i = min(range(len(table)), key=lambda i: _tie_key(table[i], i))
    best = dict(base or {})
    best.update(table[best_i]["params"])
    return GridResult(best, table[best_i]["mean_score"], table, folds)
