"""Session aggregation and per-task feature matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone
from itertools import groupby
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    EXIT_DIRECT,
    SERVICES,
    DataError,
    FeatureMatrix,
    PageviewRecord,
    SchemaError,
    SessionRecord,
)

DAY = 86400

EXIT_METHOD_FEATURES = (
    "User_Type", "Sex", "Age", "User_Language_TR", "User_Location", "Browser_Type",
    "Landing_Srv_ID", "Exit_Srv_ID", "Session_Login_Status", "Page_Count", "Service_Count",
    "Total_Session_Duration", "Avg_Page_Duration", "Total_Page_Load",
    "p_gate", "p_mail", "p_obis", "p_abis", "p_pbis", "p_menu",
)
LAST_SERVICE_FEATURES = tuple(f for f in EXIT_METHOD_FEATURES if f != "Exit_Srv_ID")
SERVICE_ACCESS_FEATURES = (
    "Log_Date_Time", "Log_Date", "User_Type", "Sex", "Age", "Avg_Page_Duration",
    "User_Language_TR", "User_Location", "Browser_Type", "Referer_Type",
)
CATEGORICAL = frozenset({
    "User_Type", "User_Location", "Browser_Type", "Referer_Type",
    "Landing_Srv_ID", "Exit_Srv_ID", "Log_Date_Time", "Log_Date",
})


@dataclass(frozen=True)
class Diagnostic:
    row: int  # session id for aggregation diagnostics, 1-based line for files
    reason: str


def sessionize(pageviews: Iterable[PageviewRecord],
               exit_methods: Mapping[int, int] | None = None,
               ) -> tuple[list[SessionRecord], list[Diagnostic]]:
    """Aggregate pageviews into one enriched record per session id.

    Sessions absent from ``exit_methods`` had no logout or timeout event
    and are labelled direct leave. A session whose pageviews disagree on
    ``user_id`` is skipped with a diagnostic.
    """
    exit_methods = exit_methods or {}
    ordered = sorted(pageviews, key=lambda p: (p.session_id, p.detail_date_time, p.detail_id))
    sessions, diagnostics = [], []
    for sid, group in groupby(ordered, key=lambda p: p.session_id):
        views = list(group)
        first, last = views[0], views[-1]
        if any(v.user_id != first.user_id for v in views):
            diagnostics.append(Diagnostic(sid, "pageviews disagree on user_id"))
            continue
        counts = [0] * len(SERVICES)
        for v in views:
            if not 1 <= v.service_id <= len(SERVICES):
                break
            counts[v.service_id - 1] += 1
        else:
            total = sum(v.page_duration for v in views)
            sessions.append(SessionRecord(
                session_id=sid,
                user_type=first.user_type, sex=first.sex, age=first.age,
                user_language_tr=first.user_language_tr, user_location=first.user_location,
                browser_type=first.browser_type, referer_type=first.referer_type,
                landing_srv_id=first.service_id, exit_srv_id=last.service_id,
                session_login_status=first.session_login_status,
                page_count=len(views),
                service_count=sum(1 for c in counts if c),
                total_session_duration=total,
                avg_page_duration=round(total / len(views), 3),
                total_page_load=round(math.fsum(v.page_load_time for v in views), 3),
                p_gate=counts[0], p_mail=counts[1], p_obis=counts[2],
                p_abis=counts[3], p_pbis=counts[4], p_menu=counts[5],
                exit_method=int(exit_methods.get(sid, EXIT_DIRECT)),
                log_date_time=first.detail_date_time,
                log_date=first.detail_date_time - first.detail_date_time % DAY,
            ))
            continue
        diagnostics.append(Diagnostic(sid, "service_id outside the service set"))
    return sessions, diagnostics


def _field_value(s: SessionRecord, name: str) -> int | float:
    if name == "Log_Date_Time":
        return datetime.fromtimestamp(s.log_date_time, timezone.utc).hour
    if name == "Log_Date":
        return datetime.fromtimestamp(s.log_date, timezone.utc).weekday()
    return getattr(s, name.lower())


_ONEHOT_PREFIX = {"Log_Date_Time": "Hour", "Log_Date": "Weekday"}


def build_features(sessions: Sequence[SessionRecord], features: Sequence[str],
                   labels: Sequence[int], class_names: Sequence[str],
                   categories: Mapping[str, Sequence[int]] | None = None,
                   forbidden: Sequence[str] = ()) -> FeatureMatrix:
    """Assemble a design matrix from named session fields.

    Categorical fields become one-hot blocks over ``categories[name]`` when
    given, otherwise over the values present in ``sessions``.
    """
    for name in features:
        if name in forbidden:
            raise SchemaError(f"column {name} is not allowed in this matrix (label leakage)")
    categories = dict(categories or {})
    names, kinds, groups, columns = [], [], [], []
    used = {}
    for name in features:
        raw = np.array([_field_value(s, name) for s in sessions], dtype=np.float64)
        if name not in CATEGORICAL:
            names.append(name)
            kinds.append("numeric")
            groups.append(name)
            columns.append(raw)
            continue
        levels = categories.get(name)
        if levels is None:
            levels = sorted({int(v) for v in raw})
        levels = [int(v) for v in levels]
        unknown = set(int(v) for v in raw) - set(levels)
        if unknown:
            raise DataError(f"{name} has values {sorted(unknown)} outside the model's levels")
        used[name] = levels
        prefix = _ONEHOT_PREFIX.get(name, name)
        for level in levels:
            names.append(f"{prefix}={level}")
            kinds.append("onehot")
            groups.append(name)
            columns.append((raw == level).astype(np.float64))
    rows = np.column_stack(columns) if columns else np.zeros((len(sessions), 0))
    return FeatureMatrix(tuple(names), tuple(kinds), tuple(groups), rows,
                         np.asarray(labels, dtype=np.int64), tuple(class_names), used)


def features_exit_method(sessions: Sequence[SessionRecord],
                         categories: Mapping[str, Sequence[int]] | None = None,
                         class_names: Sequence[str] | None = None) -> FeatureMatrix:
    """Exit-method task: the 20 session features, label = exit method."""
    if class_names is None:
        class_names = [str(c) for c in sorted({s.exit_method for s in sessions})]
    index = {int(c): i for i, c in enumerate(class_names)}
    try:
        labels = [index[s.exit_method] for s in sessions]
    except KeyError as exc:
        raise DataError(f"exit method {exc.args[0]} not among classes {list(class_names)}") from None
    return build_features(sessions, EXIT_METHOD_FEATURES, labels, class_names, categories)


def features_last_service(sessions: Sequence[SessionRecord],
                          categories: Mapping[str, Sequence[int]] | None = None,
                          class_names: Sequence[str] | None = None) -> FeatureMatrix:
    """Last-service task: exit-method features minus Exit_Srv_ID, label = exit service."""
    if class_names is None:
        class_names = [SERVICES[i - 1] for i in sorted({s.exit_srv_id for s in sessions})]
    index = {name: i for i, name in enumerate(class_names)}
    try:
        labels = [index[SERVICES[s.exit_srv_id - 1]] for s in sessions]
    except KeyError as exc:
        raise DataError(f"exit service {exc.args[0]} not among classes {list(class_names)}") from None
    return build_features(sessions, LAST_SERVICE_FEATURES, labels, class_names, categories,
                          forbidden=("Exit_Srv_ID",))


def features_service_access(sessions: Sequence[SessionRecord], target_service: str = "mail",
                            categories: Mapping[str, Sequence[int]] | None = None,
                            ) -> FeatureMatrix:
    """Binary task: did the session touch ``target_service`` at all."""
    if target_service not in SERVICES:
        raise DataError(f"unknown target service {target_service!r}; expected one of {SERVICES}")
    attr = f"p_{target_service}"
    labels = [1 if getattr(s, attr) > 0 else 0 for s in sessions]
    return build_features(sessions, SERVICE_ACCESS_FEATURES, labels, ("0", "1"), categories)


TASKS = {
    "exit-method": features_exit_method,
    "last-service": features_last_service,
    "service-access": features_service_access,
}


class Standardizer:
    """Zero-mean, unit-variance scaling of the numeric columns only.

    Parameters are fitted on training rows and carried by the model, so
    held-out rows never influence them.
    """

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, matrix: FeatureMatrix) -> "Standardizer":
        numeric = np.array([k == "numeric" for k in matrix.column_kinds])
        mean = np.zeros(matrix.n_columns)
        scale = np.ones(matrix.n_columns)
        if matrix.n_rows and numeric.any():
            cols = matrix.rows[:, numeric]
            mean[numeric] = cols.mean(axis=0)
            sd = cols.std(axis=0)
            scale[numeric] = np.where(sd > 0, sd, 1.0)
        return cls(mean, scale)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.scale

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        return matrix.with_rows(self.transform(matrix.rows))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(d["mean"], d["scale"])
