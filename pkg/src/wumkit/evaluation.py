"""Confusion matrices, per-class metrics and train/test evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DataError, FeatureMatrix
from .learn.model import TrainedModel, predict
from .learn.selection import fit
from .seeding import derive


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Entry (i, j) counts rows of true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError(f"label vectors differ in length: {len(y_true)} vs {len(y_pred)}")
    if len(y_true) and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= n_classes):
        raise DataError(f"labels must lie in [0, {n_classes})")
    flat = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def weighted_average(values, supports) -> float:
    """Σ support·value / Σ support."""
    v = np.asarray(values, dtype=np.float64)
    s = np.asarray(supports, dtype=np.float64)
    total = s.sum()
    if total <= 0:
        raise DataError("weighted average needs a positive total support")
    return float(np.dot(s, v) / total)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


@dataclass(frozen=True)
class ClassificationReport:
    class_names: tuple[str, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    weighted: dict[str, float]
    positive: dict[str, float] | None = None  # binary tasks: metrics of class index 1
    zero_division: tuple[str, ...] = ()  # classes never predicted (precision set to 0)
    confusion: np.ndarray = field(default=None, repr=False)


def classification_report(matrix: np.ndarray, class_names: Sequence[str] | None = None
                          ) -> ClassificationReport:
    M = np.asarray(matrix, dtype=np.int64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DataError("confusion matrix must be square")
    k = M.shape[0]
    if k < 2:
        raise DataError("classification report needs at least two classes")
    n = int(M.sum())
    if n == 0:
        raise DataError("confusion matrix is empty")
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(k))
    tp = np.diag(M).astype(np.float64)
    col = M.sum(axis=0).astype(np.float64)
    row = M.sum(axis=1).astype(np.float64)
    precision = _ratio(tp, col)
    recall = _ratio(tp, row)
    f1 = _ratio(2 * precision * recall, precision + recall)
    weighted = {"precision": weighted_average(precision, row),
                "recall": weighted_average(recall, row),
                "f1": weighted_average(f1, row)}
    positive = None
    if k == 2:
        positive = {"precision": float(precision[1]), "recall": float(recall[1]),
                    "f1": float(f1[1])}
    never = tuple(names[i] for i in range(k) if col[i] == 0)
    return ClassificationReport(names, precision, recall, f1, row.astype(np.int64),
                                float(tp.sum() / n), weighted, positive, never, M)


def stratified_split(labels, test_fraction: float, seed: int = 0):
    """Per class, shuffle and send round(test_fraction·n_c) rows to the test side."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test fraction must lie in (0, 1)")
    labels = np.asarray(labels)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[np.random.default_rng(derive(seed, int(c))).permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        if n_test == 0 or n_test == len(idx):
            raise DataError(f"class {c} with {len(idx)} rows cannot appear on both sides of a "
                            f"{test_fraction:g} split; use stratification on more data")
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class SplitResult:
    model: TrainedModel
    report: ClassificationReport
    train_index: np.ndarray
    test_index: np.ndarray


def evaluate_split(model, matrix: FeatureMatrix, test_fraction: float = 0.3, seed: int = 0,
                   hyperparameters: dict | None = None, n_jobs: int = 1) -> SplitResult:
    """Train on the stratified train side and report on the test side.

    ``model`` is a model kind, or a trained model whose kind and
    hyperparameters are reused.
    """
    if isinstance(model, TrainedModel):
        kind, hp = model.model_kind, dict(model.hyperparameters)
    else:
        kind, hp = model, hyperparameters
    train_idx, test_idx = stratified_split(matrix.labels, test_fraction, seed)
    trained = fit(matrix.take(train_idx), kind, hp, seed=seed, n_jobs=n_jobs)
    held = matrix.take(test_idx)
    cm = confusion_matrix(held.labels, predict(trained, held), len(matrix.class_names))
    return SplitResult(trained, classification_report(cm, matrix.class_names), train_idx, test_idx)


# ---- rendering -----------------------------------------------------------

REPORT_COLUMNS = ("Precision", "Recall", "F1 Score", "Support")


def report_rows(report: ClassificationReport) -> list[tuple[str, str, str, str, str]]:
    rows = []
    for i, name in enumerate(report.class_names):
        rows.append((name, f"{report.precision[i]:.4f}", f"{report.recall[i]:.4f}",
                     f"{report.f1[i]:.4f}", str(int(report.support[i]))))
    total = str(int(report.support.sum()))
    rows.append(("Accuracy", "", "", f"{report.accuracy:.4f}", total))
    w = report.weighted
    rows.append(("Weighted Avg.", f"{w['precision']:.4f}", f"{w['recall']:.4f}",
                 f"{w['f1']:.4f}", total))
    if report.positive is not None:
        p = report.positive
        rows.append((f"Positive ({report.class_names[1]})", f"{p['precision']:.4f}",
                     f"{p['recall']:.4f}", f"{p['f1']:.4f}", str(int(report.support[1]))))
    return rows


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(h).ljust(widths[0]) if i == 0 else str(h).rjust(widths[i])
                       for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(c).ljust(widths[0]) if i == 0 else str(c).rjust(widths[i])
                               for i, c in enumerate(r)))
    return "\n".join(lines)


def format_report(report: ClassificationReport) -> str:
    text = format_table(("Class", *REPORT_COLUMNS), report_rows(report))
    if report.zero_division:
        text += "\nnote: never predicted, precision set to 0: " + ", ".join(report.zero_division)
    return text


def report_csv(report: ClassificationReport) -> str:
    lines = [",".join(("Class", *REPORT_COLUMNS))]
    lines += [",".join(r) for r in report_rows(report)]
    return "\n".join(lines) + "\n"


def cv_table_rows(table: list[dict]) -> tuple[list[str], list[list[str]]]:
    """Grid-search audit table: one row per grid point."""
    names = list(table[0]["params"]) if table else []
    k = len(table[0]["fold_scores"]) if table else 0
    header = names + [f"fold_{i + 1}" for i in range(k)] + ["Average CV Score"]
    rows = [[str(t["params"][n]) for n in names] + [f"{s:.4f}" for s in t["fold_scores"]]
            + [f"{t['mean_score']:.4f}"] for t in table]
    return header, rows
