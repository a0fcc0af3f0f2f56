"""Binary RBF support vector machine trained by SMO.

Working-set selection uses the maximal violating pair for the first index
and second-order gain for the second (the LIBSVM WSS2 rule). Kernel rows
are computed on demand through a bounded LRU cache, so memory stays linear
in the training size apart from the cache budget.
"""

from __future__ import annotations

import logging
from collections import OrderedDict

import numpy as np

from ..core import DataError, FeatureMatrix
from ..enrich import Standardizer
from .model import TrainedModel, make_model, register_proba
from .params import SvmParams

log = logging.getLogger(__name__)

TAU = 1e-12
CACHE_BYTES = 256 * 1024 * 1024


def rbf(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _KernelRows:
    def __init__(self, X: np.ndarray, gamma: float):
        self.X = X
        self.gamma = gamma
        self.sq = (X * X).sum(axis=1)
        self.cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self.capacity = max(2, CACHE_BYTES // max(1, 8 * X.shape[0]))

    def row(self, i: int) -> np.ndarray:
        r = self.cache.get(i)
        if r is not None:
            self.cache.move_to_end(i)
            return r
        d2 = self.sq[i] + self.sq - 2.0 * (self.X @ self.X[i])
        r = np.exp(-self.gamma * np.maximum(d2, 0.0))
        r[i] = 1.0
        self.cache[i] = r
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return r


def _bounds(alpha, y, C):
    up = ((alpha < C) & (y > 0)) | ((alpha > 0) & (y < 0))
    low = ((alpha < C) & (y < 0)) | ((alpha > 0) & (y > 0))
    return up, low


def smo(X: np.ndarray, y: np.ndarray, C: float, gamma: float, tol: float, max_iter: int):
    """Solve the dual; returns (alpha, rho, gradient, iterations, converged)."""
    n = len(y)
    K = _KernelRows(X, gamma)
    alpha = np.zeros(n)
    G = -np.ones(n)
    for it in range(max_iter):
        up, low = _bounds(alpha, y, C)
        minus_yg = -y * G
        if not up.any() or not low.any():
            return alpha, _rho(alpha, y, G, C), G, it, True
        i = int(np.argmax(np.where(up, minus_yg, -np.inf)))
        gmax = minus_yg[i]
        gmin = float(np.min(np.where(low, minus_yg, np.inf)))
        if gmax - gmin < tol:
            return alpha, _rho(alpha, y, G, C), G, it, True
        Ki = K.row(i)
        b = gmax - minus_yg
        cand = low & (b > 0)
        a = 2.0 - 2.0 * Ki  # K_ii + K_tt - 2 K_it with unit diagonal
        a = np.where(a > 0, a, TAU)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))
        Kj = K.row(j)
        yi, yj = y[i], y[j]
        old_i, old_j = alpha[i], alpha[j]
        quad = 2.0 - 2.0 * Ki[j]
        if quad <= 0:
            quad = TAU
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # G = Q alpha - e with Q_tk = y_t y_k K_tk
        G += y * (Ki * (yi * (ai - old_i)) + Kj * (yj * (aj - old_j)))
    return alpha, _rho(alpha, y, G, C), G, max_iter, False


def _rho(alpha, y, G, C):
    yg = y * G
    upper = alpha >= C
    lower = alpha <= 0
    free = ~upper & ~lower
    if free.any():
        return float(yg[free].mean())
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def kkt_gap(alpha: np.ndarray, y: np.ndarray, G: np.ndarray, C: float) -> float:
    """Largest violation m(α) − M(α); ≤ tolerance means every KKT condition holds."""
    up, low = _bounds(alpha, y, C)
    minus_yg = -y * G
    if not up.any() or not low.any():
        return 0.0
    return float(minus_yg[up].max() - minus_yg[low].min())


def resolve_gamma(gamma, X: np.ndarray) -> float:
    if gamma == "scale":
        var = float(X.var())
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    return float(gamma)


def train_svm_rbf(matrix: FeatureMatrix, params: SvmParams = SvmParams(), seed: int = 0
                  ) -> TrainedModel:
    """Train on standardized features; binary problems only."""
    if len(matrix.class_names) != 2:
        raise DataError(f"SVM supports binary labels only; got {len(matrix.class_names)} classes")
    if matrix.n_rows < 2:
        raise DataError("SVM needs at least two training rows")
    rows_used = matrix.n_rows
    if matrix.n_rows > params.max_train_size:
        log.warning("SVM training subsampled from %d to %d rows", matrix.n_rows,
                    params.max_train_size)
        keep = np.sort(np.random.default_rng(params.seed).choice(
            matrix.n_rows, params.max_train_size, replace=False))
        matrix = matrix.take(keep)
        rows_used = len(keep)
    scaler = Standardizer.fit(matrix)
    X = scaler.transform(matrix.rows)
    y = np.where(matrix.labels == 1, 1.0, -1.0)
    gamma = resolve_gamma(params.gamma, X)
    max_iter = params.max_iterations or max(100_000, 100 * len(y))
    alpha, rho, G, iters, ok = smo(X, y, params.C, gamma, params.tolerance, max_iter)
    if not ok:
        log.warning("SMO stopped after %d iterations before reaching tolerance", iters)
    sv = alpha > 0
    learned = {"support_vectors": X[sv], "dual_coef": alpha[sv] * y[sv], "rho": rho,
               "gamma": gamma, "scaler": scaler.to_dict()}
    hp = {"C": params.C, "kernel": params.kernel, "gamma": params.gamma,
          "tolerance": params.tolerance, "max_train_size": params.max_train_size}
    return make_model("svm_rbf", hp, matrix, learned, seed, converged=ok, iterations=iters,
                      rows_used=rows_used, n_support=int(sv.sum()),
                      kkt_gap=kkt_gap(alpha, y, G, params.C))


def decision_function(learned: dict, rows: np.ndarray, chunk: int = 4096) -> np.ndarray:
    X = Standardizer.from_dict(learned["scaler"]).transform(rows)
    sv = np.asarray(learned["support_vectors"], dtype=np.float64).reshape(-1, X.shape[1])
    coef = np.asarray(learned["dual_coef"], dtype=np.float64)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        out[s:s + chunk] = rbf(X[s:s + chunk], sv, learned["gamma"]) @ coef - learned["rho"]
    return out


@register_proba("svm_rbf")
def _svm_proba(learned: dict, rows: np.ndarray) -> np.ndarray:
    # logistic squashing of the margin; monotone, not calibrated
    f = decision_function(learned, rows)
    p1 = 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
    return np.column_stack([1.0 - p1, p1])
