import json

import numpy as np
import pytest

from conftest import make_matrix
from wumkit.core import DataError, SchemaError
from wumkit.enrich import features_service_access
from wumkit.learn import (MODEL_KINDS, dumps, fit, load_model, loads, predict, predict_proba,
                          save_model)
from wumkit.learn.model import TrainedModel, register_proba


@pytest.fixture(scope="module")
def data(small_sim):
    m = features_service_access(small_sim[2], "mail")
    rng = np.random.default_rng(0)
    probe = m.rows[rng.integers(0, m.n_rows, 10000)].copy()
    numeric = np.array([k == "numeric" for k in m.column_kinds])
    probe[:, numeric] += rng.normal(size=(10000, numeric.sum())) * 3
    return m, probe


SMALL = {"random_forest": {"n_estimators": 15}, "gradient_boosting": {"n_estimators": 15},
         "svm_rbf": {"max_train_size": 600}}


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_reload_reproduces_predictions_bit_exactly(kind, data, tmp_path):
    m, probe = data
    model = fit(m, kind, SMALL.get(kind))
    path = tmp_path / "model.json"
    save_model(model, path)
    again = load_model(path)
    assert np.array_equal(predict_proba(model, probe), predict_proba(again, probe))
    assert dumps(again) == dumps(model)
    p = predict_proba(model, probe)
    assert np.allclose(p.sum(axis=1), 1.0)
    doc = json.loads(path.read_text())
    assert (doc["format"], doc["version"], doc["model_kind"]) == ("wumkit-model", 1, kind)
    assert doc["metadata"]["trained_at"] == "2023-11-14T22:13:20+00:00"


def test_schema_mismatch_is_reported(data):
    m, _ = data
    model = fit(m, "cart", {"max_depth": 2})
    other = make_matrix(m.rows[:, ::-1], m.labels, names=m.column_names[::-1])
    with pytest.raises(SchemaError, match="column 0 mismatch"):
        predict(model, other)
    with pytest.raises(SchemaError):
        predict(model, np.zeros((2, 3)))


def test_version_and_format_checks(data):
    m, _ = data
    doc = json.loads(dumps(fit(m, "cart", {"max_depth": 2})))
    doc["version"] = 2
    with pytest.raises(DataError, match="version"):
        loads(json.dumps(doc))
    with pytest.raises(DataError, match="not a wumkit model"):
        loads("{}")


def test_argmax_ties_pick_the_lower_class():
    @register_proba("even_split")
    def _even(learned, rows):
        return np.full((len(rows), 2), 0.5)

    model = TrainedModel("even_split", {}, {"column_names": ["x"]}, ("a", "b"), {})
    assert predict(model, [[1.0], [2.0]]).tolist() == [0, 0]
