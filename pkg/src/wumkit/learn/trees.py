"""CART, random forest and multinomial gradient boosting on the native kernels."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import kernels
from ..core import DataError, FeatureMatrix
from ..seeding import derive
from .model import TrainedModel, make_model, register_proba
from .params import CartParams, EnsembleParams

PRIOR_FLOOR = 1e-12


class Encoded:
    """Per-feature dense rank codes of a training matrix."""

    def __init__(self, rows: np.ndarray):
        n, d = rows.shape
        codes = np.empty((n, d), dtype=np.int32)
        values, n_bins = [], []
        for j in range(d):
            uniq, inv = np.unique(rows[:, j], return_inverse=True)
            codes[:, j] = inv
            values.append(uniq)
            n_bins.append(len(uniq))
        self.codes = np.ascontiguousarray(codes)
        self.n_bins = np.array(n_bins, dtype=np.int64)
        self.values = np.concatenate(values) if values else np.zeros(0)
        self.offsets = np.concatenate([[0], np.cumsum(n_bins)[:-1]]).astype(np.int64)


def _grow(enc: Encoded, y, n_classes, target, weights, criterion, params: CartParams, key):
    d = enc.codes.shape[1]
    return kernels.build_tree(
        enc.codes, enc.n_bins, enc.values, enc.offsets,
        np.ascontiguousarray(y, dtype=np.int64), int(n_classes),
        np.ascontiguousarray(target, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64), criterion,
        int(params.depth_limit), float(params.min_samples_split),
        float(params.min_samples_leaf), int(params.resolved_features(d)), int(key))


def _tree_dict(grown, value) -> dict:
    feature, threshold, left, right, decrease, node_w, _ = grown
    return {"feature": feature, "threshold": threshold, "left": left, "right": right,
            "decrease": decrease, "weight": node_w, "value": value}


def _class_tree(enc, y, n_classes, weights, params, key) -> dict:
    grown = _grow(enc, y, n_classes, np.zeros(len(y)), weights, kernels.GINI, params, key)
    n_nodes = len(grown[0])
    leaf_of = grown[6]
    seen = leaf_of >= 0
    value = np.zeros((n_nodes, n_classes))
    for k in range(n_classes):
        m = seen & (y == k)
        value[:, k] = np.bincount(leaf_of[m], weights=weights[m], minlength=n_nodes)
    totals = value.sum(axis=1, keepdims=True)
    value = np.divide(value, totals, out=np.zeros_like(value), where=totals > 0)
    return _tree_dict(grown, value)


def apply(tree: dict, rows: np.ndarray) -> np.ndarray:
    return kernels.apply_tree(tree["feature"], tree["threshold"], tree["left"], tree["right"],
                              np.ascontiguousarray(rows, dtype=np.float64))


def _check(matrix: FeatureMatrix):
    if matrix.n_rows == 0:
        raise DataError("cannot train on an empty matrix")
    if matrix.n_columns == 0:
        raise DataError("cannot train on a matrix without columns")


def _class_weights(labels, n_classes, mode):
    if mode is None:
        return np.ones(len(labels))
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    per_class = np.divide(len(labels), n_classes * counts, out=np.zeros(n_classes),
                          where=counts > 0)
    return per_class[labels]


def _hp_cart(params: CartParams) -> dict:
    return {"max_depth": params.max_depth, "min_samples_split": params.min_samples_split,
            "min_samples_leaf": params.min_samples_leaf, "max_features": params.max_features}


def train_cart(matrix: FeatureMatrix, params: CartParams = CartParams(), seed: int = 0
               ) -> TrainedModel:
    """Single gini tree grown greedily; leaves hold class-probability vectors."""
    _check(matrix)
    enc = Encoded(matrix.rows)
    y = matrix.labels
    tree = _class_tree(enc, y, len(matrix.class_names), np.ones(len(y)), params,
                       derive(seed, 0))
    return make_model("cart", _hp_cart(params), matrix, {"trees": [tree]}, seed,
                      backend=kernels.BACKEND)


def _map(fn, items, n_jobs):
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def train_random_forest(matrix: FeatureMatrix, params: EnsembleParams = EnsembleParams(
        tree=CartParams(max_features="sqrt")), n_jobs: int = 1) -> TrainedModel:
    """Bagged gini trees with per-split feature subsampling.

    Tree ``t`` draws its bootstrap and split randomness from
    ``derive(seed, t)`` alone, so ``n_jobs`` never changes the result.
    """
    _check(matrix)
    enc = Encoded(matrix.rows)
    y = matrix.labels
    n, k = len(y), len(matrix.class_names)
    base_w = _class_weights(y, k, params.class_weight)

    def one(t):
        tree_seed = derive(params.seed, t)
        if params.bootstrap:
            draws = np.random.default_rng(tree_seed).integers(0, n, n)
            w = np.bincount(draws, minlength=n) * base_w
        else:
            w = base_w.copy()
        return _class_tree(enc, y, k, w, params.tree, derive(tree_seed, 1))

    trees = _map(one, range(params.n_estimators), n_jobs)
    hp = dict(_hp_cart(params.tree), n_estimators=params.n_estimators,
              bootstrap=params.bootstrap, class_weight=params.class_weight)
    return make_model("random_forest", hp, matrix, {"trees": trees}, params.seed,
                      backend=kernels.BACKEND)


@register_proba("cart")
@register_proba("random_forest")
def _forest_proba(learned: dict, rows: np.ndarray) -> np.ndarray:
    trees = learned["trees"]
    acc = None
    for tree in trees:
        p = tree["value"][apply(tree, rows)]
        acc = p if acc is None else acc + p
    return acc / len(trees)


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def deviance(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean multinomial deviance (negative log-likelihood) of raw scores."""
    z = scores - scores.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(labels)), labels]))


def train_gradient_boosting(matrix: FeatureMatrix, params: EnsembleParams = EnsembleParams(
        tree=CartParams(max_depth=3), bootstrap=False), n_jobs: int = 1) -> TrainedModel:
    """Multinomial deviance boosting with one regression tree per class per round.

    Leaves take the one-step Newton value ``(K-1)/K * sum(r) / sum(|r|(1-|r|))``
    and scores start from the log class priors.
    """
    _check(matrix)
    enc = Encoded(matrix.rows)
    y = matrix.labels
    n, k = len(y), len(matrix.class_names)
    prior = np.bincount(y, minlength=k) / n
    init = np.log(np.maximum(prior, PRIOR_FLOOR))
    scores = np.tile(init, (n, 1))
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    ones = np.ones(n)
    zeros_y = np.zeros(n, dtype=np.int64)
    lr = params.learning_rate
    rounds, losses = [], [deviance(scores, y)]
    for m in range(params.n_estimators):
        prob = _softmax(scores)

        def one(c, m=m, prob=prob):
            resid = onehot[:, c] - prob[:, c]
            grown = _grow(enc, zeros_y, 1, resid, ones, kernels.MSE, params.tree,
                          derive(params.seed, m, c))
            leaf_of = grown[6]
            n_nodes = len(grown[0])
            num = np.bincount(leaf_of, weights=resid, minlength=n_nodes)
            a = np.abs(resid)
            den = np.bincount(leaf_of, weights=a * (1.0 - a), minlength=n_nodes)
            value = np.divide(num, den, out=np.zeros(n_nodes), where=den > 1e-150)
            value *= (k - 1) / k
            return _tree_dict(grown, value), value[leaf_of]

        fitted = _map(one, range(k), n_jobs)
        for c, (_, step) in enumerate(fitted):
            scores[:, c] += lr * step
        rounds.append([tree for tree, _ in fitted])
        losses.append(deviance(scores, y))
    hp = dict(_hp_cart(params.tree), n_estimators=params.n_estimators, learning_rate=lr)
    learned = {"init": init, "learning_rate": lr, "rounds": rounds}
    return make_model("gradient_boosting", hp, matrix, learned, params.seed,
                      backend=kernels.BACKEND, train_loss=losses)


def boosting_scores(learned: dict, rows: np.ndarray) -> np.ndarray:
    """Raw per-class scores before the softmax."""
    n = rows.shape[0]
    scores = np.tile(np.asarray(learned["init"], dtype=np.float64), (n, 1))
    lr = learned["learning_rate"]
    for round_trees in learned["rounds"]:
        for c, tree in enumerate(round_trees):
            scores[:, c] += lr * tree["value"][apply(tree, rows)]
    return scores


@register_proba("gradient_boosting")
def _boosting_proba(learned: dict, rows: np.ndarray) -> np.ndarray:
    return _softmax(boosting_scores(learned, rows))


def all_trees(model: TrainedModel) -> list[dict]:
    if model.model_kind in ("cart", "random_forest"):
        return list(model.learned["trees"])
    if model.model_kind == "gradient_boosting":
        return [t for rnd in model.learned["rounds"] for t in rnd]
    raise DataError(f"feature importance is defined for tree models only, not {model.model_kind}")


def feature_importance(model: TrainedModel, grouped: bool = True) -> list[tuple[str, float]]:
    """Impurity decrease summed per feature within each tree, averaged over
    trees and normalised to sum to 1.

    Decreases are node-weighted, so splits near the root of early boosting
    rounds count for more than late residual fits. With ``grouped`` the
    one-hot columns fold back into their source field.
    """
    trees = all_trees(model)
    names = model.schema["column_names"]
    d = len(names)
    acc = np.zeros(d)
    for tree in trees:
        internal = tree["feature"] >= 0
        acc += np.bincount(tree["feature"][internal], weights=tree["decrease"][internal],
                           minlength=d)
    acc /= len(trees)
    total = acc.sum()
    if total > 0:
        acc /= total
    labels = model.schema["column_groups"] if grouped else names
    merged: dict[str, float] = {}
    for label, value in zip(labels, acc):
        merged[label] = merged.get(label, 0.0) + float(value)
    return sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))
