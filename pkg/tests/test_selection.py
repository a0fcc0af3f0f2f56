import numpy as np
import pytest

from conftest import make_matrix
from wumkit.core import ConfigError, DataError
from wumkit.learn import GridSearchSpec, grid_search, stratified_folds
from wumkit.learn.selection import cross_val_scores, mean_score


@pytest.fixture(scope="module")
def matrix():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    X = np.round(rng.normal(size=(200, 3)) + y[:, None], 2)
    return make_matrix(X, y)


def test_single_point_grid(matrix):
    result = grid_search(matrix, "cart", GridSearchSpec({"max_depth": [3]}, folds=4, seed=1))
    scores = cross_val_scores(matrix, "cart", {"max_depth": 3}, result.folds, 1)
    assert result.best_params == {"max_depth": 3}
    assert result.best_score == mean_score(scores) == sum(scores) / 4
    assert result.table[0]["fold_scores"] == scores


def test_table_is_the_cartesian_product(matrix):
    spec = GridSearchSpec({"max_depth": [1, 2, 4], "min_samples_leaf": [1, 5]}, folds=3)
    result = grid_search(matrix, "cart", spec)
    assert len(result.table) == 6
    assert [r["params"] for r in result.table][:2] == [{"max_depth": 1, "min_samples_leaf": 1},
                                                       {"max_depth": 1, "min_samples_leaf": 5}]
    assert result.best_score == max(r["mean_score"] for r in result.table)


def test_ties_prefer_the_simpler_point(matrix):
    # depth beyond the data's needs gives equal scores; the shallower one wins
    result = grid_search(matrix, "cart", GridSearchSpec({"max_depth": [40, 30]}, folds=3))
    assert result.table[0]["mean_score"] == result.table[1]["mean_score"]
    assert result.best_params["max_depth"] == 30


def test_folds_are_stratified_and_seeded():
    labels = np.array([0] * 50 + [1] * 23)
    folds = stratified_folds(labels, 5, seed=3)
    assert np.array_equal(folds, stratified_folds(labels, 5, seed=3))
    for f in range(5):
        counts = np.bincount(labels[folds == f], minlength=2)
        assert counts[0] == 10 and counts[1] in (4, 5)
    with pytest.raises(DataError, match="fewer than"):
        stratified_folds(np.array([0] * 10 + [1] * 2), 5)


def test_bad_grids(matrix):
    with pytest.raises(ConfigError):
        GridSearchSpec({"max_depth": []})
    with pytest.raises(ConfigError, match="unknown hyperparameter"):
        grid_search(matrix, "cart", GridSearchSpec({"depth": [1]}))
