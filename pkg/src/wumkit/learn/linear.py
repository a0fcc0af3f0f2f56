"""L2-regularised logistic regression by gradient descent with backtracking."""

from __future__ import annotations

import logging

import numpy as np

from ..core import DataError, FeatureMatrix
from ..enrich import Standardizer
from .model import TrainedModel, make_model, register_proba
from .params import LinearParams

log = logging.getLogger(__name__)


def objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """(1/C)·½‖w‖² + Σ log(1 + exp(−y(w·x + b))), labels y in {−1, +1}."""
    z = X @ w + b
    return float(0.5 * (w @ w) / C + np.logaddexp(0.0, -y * z).sum())


def gradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float):
    z = X @ w + b
    # d/dz log(1+exp(-yz)) = -y * sigmoid(-yz)
    coef = -y * _sigmoid(-y * z)
    return w / C + X.T @ coef, float(coef.sum())


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def fit_binary(X: np.ndarray, y: np.ndarray, params: LinearParams):
    """Minimise the objective; returns (w, b, iterations, converged)."""
    d = X.shape[1]
    w = np.zeros(d)
    b = 0.0
    C = params.C
    f = objective(w, b, X, y, C)
    gw, gb = gradient(w, b, X, y, C)
    step = 1.0 / max(1.0, 0.25 * float(np.einsum("ij,ij->", X, X)) + 0.25 * len(y))
    prev = None
    for it in range(params.max_iterations):
        gmax = max(float(np.abs(gw).max(initial=0.0)), abs(gb))
        if gmax <= params.tolerance:
            return w, b, it, True
        if prev is not None:
            # Barzilai-Borwein guess for the trial step, then Armijo backtracking
            sw, sb, yw, yb = prev
            sy = float(sw @ yw) + sb * yb
            if sy > 0:
                step = sy / (float(yw @ yw) + yb * yb)
        gnorm2 = float(gw @ gw) + gb * gb
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            f_new = objective(w_new, b_new, X, y, C)
            if not np.isfinite(f_new):
                raise DataError("non-finite logistic loss; standardize the numeric inputs")
            if f_new <= f - 0.5 * step * gnorm2 or step < 1e-18:
                break
            step *= 0.5
        gw_new, gb_new = gradient(w_new, b_new, X, y, C)
        prev = (w_new - w, b_new - b, gw_new - gw, gb_new - gb)
        w, b, f, gw, gb = w_new, b_new, f_new, gw_new, gb_new
    return w, b, params.max_iterations, False


def train_logistic_regression(matrix: FeatureMatrix, params: LinearParams = LinearParams(),
                              seed: int = 0) -> TrainedModel:
    """Binary logistic regression; more than two classes are fitted one-vs-rest.

    Numeric columns are standardized with statistics of ``matrix`` itself
    and the scaler is stored in the model.
    """
    if matrix.n_rows == 0:
        raise DataError("cannot train on an empty matrix")
    scaler = Standardizer.fit(matrix)
    X = scaler.transform(matrix.rows)
    k = len(matrix.class_names)
    targets = [1] if k == 2 else list(range(k))
    weights, biases, converged, iters = [], [], True, []
    for c in targets:
        y = np.where(matrix.labels == c, 1.0, -1.0)
        w, b, it, ok = fit_binary(X, y, params)
        weights.append(w)
        biases.append(b)
        iters.append(it)
        converged &= ok
    if not converged:
        log.warning("logistic regression stopped at max_iterations=%d before reaching tolerance",
                    params.max_iterations)
    learned = {"weights": np.array(weights), "bias": np.array(biases),
               "scaler": scaler.to_dict(), "n_classes": k}
    hp = {"C": params.C, "max_iterations": params.max_iterations, "tolerance": params.tolerance}
    return make_model("logistic_regression", hp, matrix, learned, seed,
                      converged=converged, iterations=iters)


@register_proba("logistic_regression")
def _logistic_proba(learned: dict, rows: np.ndarray) -> np.ndarray:
    X = Standardizer.from_dict(learned["scaler"]).transform(rows)
    z = X @ np.asarray(learned["weights"]).T + np.asarray(learned["bias"])
    if learned["n_classes"] == 2:
        p1 = _sigmoid(z[:, 0])
        return np.column_stack([1.0 - p1, p1])
    p = np.maximum(_sigmoid(z), 1e-300)
    return p / p.sum(axis=1, keepdims=True)
