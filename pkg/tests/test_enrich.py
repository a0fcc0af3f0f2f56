from datetime import datetime, timezone

import numpy as np
import pytest

from conftest import sample_pageview
from wumkit.core import DataError, SchemaError
from wumkit.enrich import (EXIT_METHOD_FEATURES, LAST_SERVICE_FEATURES, Standardizer,
                           build_features, features_exit_method, features_last_service,
                           features_service_access, sessionize)

T0 = int(datetime(2022, 11, 20, 13, 1, tzinfo=timezone.utc).timestamp())


def views(durations, services, times=None, session_id=7):
    times = times or [T0 + 60 * i for i in range(len(durations))]
    return [sample_pageview(detail_id=100 + i, session_id=session_id, detail_date_time=t,
                            page_duration=d, service_id=s)
            for i, (d, s, t) in enumerate(zip(durations, services, times))]


def test_hand_computed_session():
    (s,), diagnostics = sessionize(views([41, 10, 9], [3, 3, 2]), {7: 1})
    assert diagnostics == []
    assert (s.page_count, s.total_session_duration, s.avg_page_duration) == (3, 60, 20.0)
    assert (s.service_count, s.p_obis, s.p_mail, s.exit_srv_id, s.landing_srv_id) == (2, 2, 1, 2, 3)
    assert s.exit_method == 1
    assert s.total_page_load == 0.366
    assert s.log_date == T0 - T0 % 86400


def test_singleton_session_defaults_to_direct_leave():
    (s,), _ = sessionize(views([41], [5]))
    assert (s.page_count, s.avg_page_duration, s.landing_srv_id, s.exit_srv_id) == (1, 41.0, 5, 5)
    assert s.exit_method == 0


def test_same_timestamp_orders_by_detail_id():
    pv = views([5, 5], [1, 6], times=[T0, T0])
    (s,), _ = sessionize(reversed(pv))
    assert s.exit_srv_id == 6


def test_inconsistent_user_is_skipped():
    pv = views([5, 5], [1, 2])
    pv[1] = pv[1].__class__(**{**pv[1].__dict__, "user_id": 1})
    sessions, diagnostics = sessionize(pv + views([3], [1], session_id=8))
    assert [s.session_id for s in sessions] == [8]
    assert diagnostics[0].row == 7


def test_sessionize_conserves_pageviews(small_sim):
    _, pageviews, sessions, _ = small_sim
    rebuilt, diagnostics = sessionize(pageviews, {s.session_id: s.exit_method for s in sessions})
    assert rebuilt == sessions and diagnostics == []


def test_one_hot_width_and_classes(small_sim):
    sessions = small_sim[2]
    picked = []
    for t in (1, 3, 6):
        picked.append(next(s for s in sessions if s.user_type == t))
    m = build_features(picked, ["User_Type", "Age"], [0, 1, 2], ["0", "1", "2"])
    assert m.column_names == ("User_Type=1", "User_Type=3", "User_Type=6", "Age")
    assert m.column_groups[:3] == ("User_Type",) * 3
    assert m.rows[:, :3].tolist() == np.eye(3).tolist()


def test_exit_method_classes(small_sim):
    m = features_exit_method(small_sim[2])
    assert m.class_names == ("0", "1", "2")
    assert len(EXIT_METHOD_FEATURES) == 20 and len(LAST_SERVICE_FEATURES) == 19
    assert m.n_rows == len(small_sim[2])


def test_last_service_guards_against_leakage(small_sim):
    sessions = small_sim[2]
    m = features_last_service(sessions)
    assert not any(g == "Exit_Srv_ID" for g in m.column_groups)
    mail = m.class_names.index("mail")
    s = next(i for i, x in enumerate(sessions) if x.exit_srv_id == 2)
    assert m.labels[s] == mail
    with pytest.raises(SchemaError):
        build_features(sessions, ["Exit_Srv_ID"], [0] * len(sessions), ["a"],
                       forbidden=("Exit_Srv_ID",))


def test_service_access_labels_and_hours(small_sim):
    sessions = small_sim[2]
    m = features_service_access(sessions, "mail")
    assert m.labels.tolist() == [int(s.p_mail > 0) for s in sessions]
    hour = datetime.fromtimestamp(sessions[0].log_date_time, timezone.utc).hour
    assert m.rows[0, m.column_names.index(f"Hour={hour}")] == 1.0
    with pytest.raises(DataError):
        features_service_access(sessions, "news")


def test_hour_bucket_of_sample_time():
    (s,), _ = sessionize(views([41], [3]))
    m = build_features([s], ["Log_Date_Time"], [0], ["0", "1"])
    assert m.column_names == ("Hour=13",)


def test_unknown_category_level_is_rejected(small_sim):
    sessions = small_sim[2]
    with pytest.raises(DataError, match="outside the model's levels"):
        features_exit_method(sessions, categories={"User_Type": [1]})


def test_standardizer_identity(small_sim):
    m = features_exit_method(small_sim[2])
    scaled = Standardizer.fit(m).apply(m)
    numeric = np.array([k == "numeric" for k in m.column_kinds])
    cols = scaled.rows[:, numeric]
    varying = m.rows[:, numeric].std(axis=0) > 0
    assert np.allclose(cols.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(cols[:, varying].std(axis=0), 1, atol=1e-9)
    assert np.array_equal(scaled.rows[:, ~numeric], m.rows[:, ~numeric])
    again = Standardizer.from_dict(Standardizer.fit(m).to_dict())
    assert np.array_equal(again.transform(m.rows), scaled.rows)
