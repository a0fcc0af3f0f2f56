import math

import numpy as np
import pytest

from conftest import sample_pageview
from wumkit.core import ConfigError, DataError
from wumkit.iforest import (EULER_GAMMA, IForestParams, anomaly_score, average_path_length,
                            baseline_flags, contamination_threshold, detect_per_server,
                            fit_iforest, harmonic_estimate, path_length, write_report_csv)


@pytest.mark.parametrize("m, value", [(1, 0.5772156649), (255, 6.1184792), (10, 2.8798007)])
def test_harmonic_estimate(m, value):
    assert harmonic_estimate(m) == pytest.approx(value, abs=1e-6)


def test_harmonic_needs_positive_m():
    with pytest.raises(DataError):
        harmonic_estimate(0)


@pytest.mark.parametrize("n, value", [(1, 0.0), (0, 0.0), (2, 0.1544313), (256, 10.2448)])
def test_average_path_length(n, value):
    assert average_path_length(n) == pytest.approx(value, abs=1e-3 if n == 256 else 1e-6)


def test_small_n_uses_the_logarithmic_estimate():
    assert average_path_length(2) == pytest.approx(2 * EULER_GAMMA - 1)


@pytest.mark.parametrize("h, s", [(0.0, 1.0), ("c", 0.5), ("2c", 0.25)])
def test_score_landmarks(h, s):
    c = average_path_length(256)
    h = {"c": c, "2c": 2 * c}.get(h, h)
    assert anomaly_score(h, 256) == s


def test_score_vectorised_and_guarded():
    s = anomaly_score(np.array([0.0, 1.0, 100.0]), 256)
    assert s.shape == (3,) and s[0] == 1.0 and np.all(np.diff(s) < 0)
    with pytest.raises(DataError):
        anomaly_score(1.0, 1)


def test_two_points_split_at_depth_one():
    forest = fit_iforest([0.0, 1.0], IForestParams(n_trees=20))
    for t in range(20):
        tree = forest.tree(t)
        assert tree["feature"][0] == 0 and len(tree["feature"]) == 3
        assert tree["depth"][1:].tolist() == [1, 1]
    assert np.allclose(path_length(forest, [[0.0], [1.0]]), 1.0)


def test_identical_points_form_one_leaf():
    forest = fit_iforest(np.ones(50), IForestParams(n_trees=5, subsample=16))
    for t in range(5):
        assert forest.tree(t)["size"].tolist() == [16]
    expected = average_path_length(16)
    assert np.allclose(path_length(forest, [[1.0]]), expected)


def test_size_adjustment_at_a_pair_leaf():
    # three points where two coincide: the pair can never be separated
    forest = fit_iforest([0.0, 5.0, 5.0], IForestParams(n_trees=10, subsample=3))
    for t in range(10):
        tree = forest.tree(t)
        leaf = np.flatnonzero((tree["feature"] < 0) & (tree["size"] == 2))[0]
        a, b = forest.tree_offsets[t], forest.tree_offsets[t + 1]
        assert forest.terminal[a:b][leaf] == tree["depth"][leaf] + average_path_length(2)


def test_outlier_isolates_faster():
    rng = np.random.default_rng(0)
    points = np.append(1.0 + rng.uniform(-0.01, 0.01, 500), 100.0)
    forest = fit_iforest(points, IForestParams(seed=3))
    h = path_length(forest, points)
    assert h[-1] < h[:-1].mean()
    assert h[-1] == h.min()


def test_threads_and_height_limit():
    points = np.random.default_rng(1).lognormal(size=3000)
    a = fit_iforest(points, IForestParams(seed=2))
    b = fit_iforest(points, IForestParams(seed=2), n_jobs=4)
    assert np.array_equal(a.threshold, b.threshold) and np.array_equal(a.terminal, b.terminal)
    assert a.height_limit == 8 and a.depth.max() <= 8
    c = fit_iforest(points, IForestParams(seed=3))
    assert not np.array_equal(a.threshold, c.threshold)


def test_contamination_threshold_counts():
    scores = np.random.default_rng(2).random(10000)
    thr = contamination_threshold(scores, 0.02)
    assert np.sum(scores >= thr) == 200
    assert contamination_threshold(scores[:10], 0.02) == math.inf


def test_baseline_rule():
    flags, mean, sd = baseline_flags(np.array([1.0, 1.0, 1.0]))
    assert not flags.any() and sd == 0.0
    flags, _, _ = baseline_flags(np.array([0.0, 0.0, 0.0, 0.0, 10.0]))
    assert flags.tolist() == [False] * 4 + [True]


def test_params_validation():
    with pytest.raises(ConfigError):
        IForestParams(contamination=0.6)
    with pytest.raises(ConfigError):
        IForestParams(subsample=1)
    IForestParams(contamination=None, score_threshold=0.6)


def test_per_server_reports(small_sim, tmp_path):
    pageviews = small_sim[1]
    report = detect_per_server(pageviews, IForestParams(n_trees=50), baseline=True)
    assert sorted(report.servers) == list(range(1, 8))
    for sid, summary in report.servers.items():
        idx = report.for_server(sid)
        assert summary.count == len(idx)
        assert report.index[idx].tolist() == list(range(len(idx)))
        k = round(0.02 * len(idx))
        scores = report.score[idx]
        # tied scores at the threshold are all flagged
        assert summary.anomaly_count == report.iforest_flag[idx].sum() >= k
        assert np.sum(scores > summary.threshold) < k
    assert write_report_csv(report, tmp_path / "a.csv") == len(pageviews)
    header = (tmp_path / "a.csv").read_text().split("\n")[0]
    assert header == "server_id,index,page_load_time,score,iforest_flag,baseline_flag"


def test_lonely_server_is_skipped():
    views = [sample_pageview(detail_id=i, server_id=1, page_load_time=0.1 * i) for i in range(1, 9)]
    views.append(sample_pageview(detail_id=99, server_id=2))
    report = detect_per_server(views, IForestParams(n_trees=10))
    assert list(report.servers) == [1]
    assert "server 2" in report.diagnostics[0].reason
    with pytest.raises(DataError):
        detect_per_server([])
