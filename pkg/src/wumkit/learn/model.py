"""Trained model container, prediction dispatch and the model file format."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import DataError, FeatureMatrix, SchemaError, WumError

FORMAT = "wumkit-model"
FORMAT_VERSION = 1

_PROBA: dict[str, Callable[[dict, np.ndarray], np.ndarray]] = {}


def register_proba(kind: str):
    def deco(fn):
        _PROBA[kind] = fn
        return fn
    return deco


@dataclass
class TrainedModel:
    model_kind: str
    hyperparameters: dict
    schema: dict
    class_names: tuple[str, ...]
    learned: dict
    metadata: dict = field(default_factory=dict)

    @property
    def column_names(self) -> list[str]:
        return self.schema["column_names"]


def matrix_fingerprint(matrix: FeatureMatrix) -> str:
    h = hashlib.blake2b(digest_size=8)
    h.update(",".join(matrix.column_names).encode())
    h.update(np.ascontiguousarray(matrix.rows).tobytes())
    h.update(np.ascontiguousarray(matrix.labels, dtype=np.int64).tobytes())
    return h.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (datetime.fromtimestamp(int(epoch), timezone.utc) if epoch
              else datetime.now(timezone.utc).replace(microsecond=0))
    return moment.isoformat()


def make_model(kind: str, hp: dict, matrix: FeatureMatrix, learned: dict, seed: int,
               **extra) -> TrainedModel:
    schema = matrix.schema()
    schema["categories"] = {k: list(v) for k, v in matrix.categories.items()}
    meta = {"seed": seed, "dataset_fingerprint": matrix_fingerprint(matrix),
            "n_train": matrix.n_rows, "trained_at": _timestamp()}
    meta.update(extra)
    return TrainedModel(kind, dict(hp), schema, tuple(matrix.class_names), learned, meta)


def check_schema(model: TrainedModel, matrix: FeatureMatrix) -> None:
    expected = model.column_names
    got = list(matrix.column_names)
    for i in range(max(len(expected), len(got))):
        a = expected[i] if i < len(expected) else "<missing>"
        b = got[i] if i < len(got) else "<missing>"
        if a != b:
            raise SchemaError(f"column {i} mismatch: model expects {a!r}, matrix has {b!r}")


def _rows(model: TrainedModel, data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        check_schema(model, data)
        return data.rows
    rows = np.asarray(data, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != len(model.column_names):
        raise SchemaError(f"expected {len(model.column_names)} columns, got shape {rows.shape}")
    return rows


def predict_proba(model: TrainedModel, data) -> np.ndarray:
    """Class probabilities, one row per input row; rows sum to 1."""
    try:
        fn = _PROBA[model.model_kind]
    except KeyError:
        raise WumError(f"no predictor for model kind {model.model_kind!r}") from None
    return fn(model.learned, _rows(model, data))


def predict(model: TrainedModel, data) -> np.ndarray:
    """Predicted class index; ties resolve to the lowest index."""
    return np.argmax(predict_proba(model, data), axis=1).astype(np.int64)


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.dtype.str, "data": obj.tolist()}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["data"], dtype=np.dtype(obj["__array__"]))
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def dumps(model: TrainedModel) -> str:
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "model_kind": model.model_kind,
        "hyperparameters": _encode(model.hyperparameters),
        "class_names": list(model.class_names),
        "schema": _encode(model.schema),
        "metadata": _encode(model.metadata),
        "learned": _encode(model.learned),
    }
    # float repr is shortest round-trip, so decoding restores exact doubles
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def loads(text: str) -> TrainedModel:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise DataError("not a wumkit model file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported model file version {doc.get('version')}")
    return TrainedModel(doc["model_kind"], _decode(doc["hyperparameters"]),
                        _decode(doc["schema"]), tuple(doc["class_names"]),
                        _decode(doc["learned"]), _decode(doc["metadata"]))


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return loads(text)
