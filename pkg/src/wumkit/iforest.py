"""Isolation forest scoring of page load times, one forest per server.

The normaliser c(n) uses the ln(m) + γ harmonic approximation for every
n ≥ 2, so c(2) is about 0.154 rather than the exact value 1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .core import ConfigError, DataError, PageviewRecord
from .enrich import Diagnostic
from .seeding import derive

EULER_GAMMA = 0.5772156649


def harmonic_estimate(m: int) -> float:
    """ln(m) + γ."""
    if m < 1:
        raise DataError(f"harmonic estimate needs m ≥ 1, got {m}")
    return math.log(m) + EULER_GAMMA


def average_path_length(n: int) -> float:
    """c(n) = 2·H(n−1) − 2(n−1)/n, and 0 for n ≤ 1."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic_estimate(n - 1) - 2.0 * (n - 1) / n


def anomaly_score(h, n: int):
    """s = 2^(−h / c(n)); accepts a scalar or an array of path lengths."""
    c = average_path_length(n)
    if c <= 0:
        raise DataError(f"anomaly score needs a subsample size n ≥ 2, got {n}")
    h = np.asarray(h, dtype=np.float64)
    s = np.exp2(-h / c)
    return float(s) if s.ndim == 0 else s


@dataclass(frozen=True)
class IForestParams:
    n_trees: int = 100
    subsample: int = 256
    seed: int = 0
    contamination: float | None = 0.02
    score_threshold: float | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be ≥ 1")
        if self.subsample < 2:
            raise ConfigError("subsample size must be ≥ 2")
        if self.score_threshold is not None:
            if not 0.0 < self.score_threshold <= 1.0:
                raise ConfigError("score_threshold must lie in (0, 1]")
        elif self.contamination is None or not 0.0 < self.contamination < 0.5:
            raise ConfigError("contamination must lie in (0, 0.5) unless a score threshold is set")


@dataclass(frozen=True)
class IsolationForest:
    """Concatenated node arrays of all trees; child indices are tree-local."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    terminal: np.ndarray
    tree_offsets: np.ndarray
    sample_size: int
    height_limit: int

    @property
    def n_trees(self) -> int:
        return len(self.tree_offsets) - 1

    def tree(self, t: int) -> dict:
        a, b = self.tree_offsets[t], self.tree_offsets[t + 1]
        return {name: getattr(self, name)[a:b]
                for name in ("feature", "threshold", "left", "right", "size", "depth")}


def _as_points(values) -> np.ndarray:
    X = np.asarray(values, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError("points must be a 1-D or 2-D array")
    return np.ascontiguousarray(X)


def fit_iforest(values, params: IForestParams = IForestParams(), stream: int = 0,
                n_jobs: int = 1) -> IsolationForest:
    """Grow ``params.n_trees`` trees on subsamples drawn without replacement.

    Tree ``t`` draws from seeds derived from (seed, stream, t), so the
    forest does not depend on ``n_jobs``.
    """
    X = _as_points(values)
    n = X.shape[0]
    if n < 2:
        raise DataError(f"isolation forest needs at least 2 points, got {n}")
    psi = min(params.subsample, n)
    limit = math.ceil(math.log2(psi))

    def grow(t):
        rng = np.random.default_rng(derive(params.seed, stream, t))
        idx = rng.choice(n, psi, replace=False)
        return kernels.build_itree(X[idx], limit, derive(params.seed, stream, t, 1))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(grow, range(params.n_trees)))
    else:
        trees = [grow(t) for t in range(params.n_trees)]
    parts = list(zip(*trees))
    feature, threshold, left, right, size, depth = (np.concatenate(p) for p in parts)
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(t[0]) for t in trees])
    terminal = depth.astype(np.float64)
    leaves = feature < 0
    adjust = {int(s): average_path_length(int(s)) for s in np.unique(size[leaves])}
    terminal[leaves] += np.array([adjust[int(s)] for s in size[leaves]])
    return IsolationForest(feature.astype(np.int64), threshold.astype(np.float64),
                           left.astype(np.int64), right.astype(np.int64),
                           size.astype(np.int64), depth.astype(np.int64), terminal, offsets,
                           psi, limit)


def path_length(model: IsolationForest, points) -> np.ndarray:
    """Mean over trees of edges to the terminating node plus c(size) there."""
    X = _as_points(points)
    total = kernels.forest_path_length(model.feature, model.threshold, model.left, model.right,
                                       model.terminal, model.tree_offsets, X)
    return np.asarray(total) / model.n_trees


def score_points(model: IsolationForest, points) -> np.ndarray:
    return anomaly_score(path_length(model, points), model.sample_size)


def contamination_threshold(scores: np.ndarray, q: float) -> float:
    """Score of the k-th highest point, k = round(q·n); +inf when k is 0."""
    k = int(round(q * len(scores)))
    if k <= 0:
        return math.inf
    return float(np.sort(scores)[::-1][k - 1])


def baseline_flags(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Flag points more than one population standard deviation from the mean."""
    mean = float(np.mean(values))
    sd = float(np.std(values))
    if sd == 0.0:
        return np.zeros(len(values), dtype=bool), mean, sd
    return np.abs(values - mean) > sd, mean, sd


@dataclass(frozen=True)
class ServerSummary:
    server_id: int
    count: int
    mean: float
    std: float
    threshold: float
    anomaly_count: int
    baseline_count: int | None


@dataclass
class AnomalyReport:
    server_id: np.ndarray
    index: np.ndarray
    detail_id: np.ndarray
    page_load_time: np.ndarray
    score: np.ndarray
    iforest_flag: np.ndarray
    baseline_flag: np.ndarray | None
    servers: dict[int, ServerSummary] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def for_server(self, server_id: int) -> np.ndarray:
        return np.flatnonzero(self.server_id == server_id)

    def flagged_ids(self) -> set[int]:
        return set(self.detail_id[self.iforest_flag].tolist())


def detect_per_server(pageviews: Sequence[PageviewRecord], params: IForestParams = IForestParams(),
                      features: Sequence[str] = ("page_load_time",), baseline: bool = False,
                      n_jobs: int = 1) -> AnomalyReport:
    """Fit and score an independent forest per server.

    Points on a server are indexed 0.. in (timestamp, detail id) order.
    Servers with fewer than two pageviews are skipped with a diagnostic.
    """
    if not pageviews:
        raise DataError("no pageviews to analyse")
    groups: dict[int, list[PageviewRecord]] = {}
    for p in pageviews:
        groups.setdefault(p.server_id, []).append(p)
    diagnostics = []
    jobs = []
    for sid in sorted(groups):
        views = sorted(groups[sid], key=lambda p: (p.detail_date_time, p.detail_id))
        if len(views) < 2:
            diagnostics.append(Diagnostic(sid, f"server {sid} has {len(views)} pageview; skipped"))
            continue
        jobs.append((sid, views))

    def run(job):
        sid, views = job
        X = np.array([[getattr(p, f) for f in features] for p in views], dtype=np.float64)
        forest = fit_iforest(X, params, stream=sid)
        return sid, views, score_points(forest, X)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            scored = list(pool.map(run, jobs))
    else:
        scored = [run(j) for j in jobs]

    cols = {k: [] for k in ("server_id", "index", "detail_id", "load", "score", "flag", "base")}
    servers = {}
    for sid, views, scores in scored:
        load = np.array([p.page_load_time for p in views])
        if params.score_threshold is not None:
            thr = params.score_threshold
        else:
            thr = contamination_threshold(scores, params.contamination)
        flags = scores >= thr
        base, mean, sd = baseline_flags(load)
        servers[sid] = ServerSummary(sid, len(views), mean, sd, thr, int(flags.sum()),
                                     int(base.sum()) if baseline else None)
        cols["server_id"].append(np.full(len(views), sid))
        cols["index"].append(np.arange(len(views)))
        cols["detail_id"].append(np.array([p.detail_id for p in views]))
        cols["load"].append(load)
        cols["score"].append(scores)
        cols["flag"].append(flags)
        cols["base"].append(base)
    if not scored:
        raise DataError("no server has at least two pageviews")
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    return AnomalyReport(cat["server_id"], cat["index"], cat["detail_id"], cat["load"],
                         cat["score"], cat["flag"], cat["base"] if baseline else None,
                         servers, diagnostics)


def write_report_csv(report: AnomalyReport, path) -> int:
    header = "server_id,index,page_load_time,score,iforest_flag"
    if report.baseline_flag is not None:
        header += ",baseline_flag"
    lines = [header]
    for i in range(len(report.score)):
        row = (f"{report.server_id[i]},{report.index[i]},{report.page_load_time[i]:.3f},"
               f"{report.score[i]:.6f},{int(report.iforest_flag[i])}")
        if report.baseline_flag is not None:
            row += f",{int(report.baseline_flag[i])}"
        lines.append(row)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(lines) - 1


def recovery(report: AnomalyReport, truth: dict[int, int]) -> dict[int, tuple[float, float]]:
    """Per-server (precision, recall) of the forest flags against ground truth."""
    out = {}
    for sid in report.servers:
        idx = report.for_server(sid)
        flagged = report.iforest_flag[idx]
        actual = np.array([truth.get(int(d), 0) == 1 for d in report.detail_id[idx]])
        tp = int(np.count_nonzero(flagged & actual))
        precision = tp / int(flagged.sum()) if flagged.any() else 0.0
        recall = tp / int(actual.sum()) if actual.any() else 1.0
        out[sid] = (precision, recall)
    return out
