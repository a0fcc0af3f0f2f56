import io
import math
from dataclasses import replace

import numpy as np
import pytest

from oracles import binomial_interval
from wumkit import ingest
from wumkit.core import EXIT_LOGOUT, EXIT_TIMEOUT, ConfigError, dataset_fingerprint
from wumkit.farmsim import (AnomalyRegime, SimConfig, expected_counts, exit_events, generate,
                            scale_preset)
from wumkit.core import validate_pageview, validate_session


def csv_bytes(pageviews, sessions) -> bytes:
    a, b = io.StringIO(), io.StringIO()
    ingest.write_pageviews(pageviews, a)
    ingest.write_sessions(sessions, b)
    return (a.getvalue() + b.getvalue()).encode()


def test_same_seed_same_bytes():
    config = SimConfig(seed=42, user_count=10, day_count=1)
    first, second = generate(config), generate(config)
    assert csv_bytes(*first[:2]) == csv_bytes(*second[:2])
    assert first[2] == second[2]


def test_worker_count_does_not_matter():
    config = SimConfig(seed=3, user_count=120, day_count=2)
    pv1, s1, t1 = generate(config, workers=1)
    pv3, s3, t3 = generate(config, workers=3)
    assert dataset_fingerprint(pv1) == dataset_fingerprint(pv3)
    assert s1 == s3 and t1 == t3


def test_records_are_valid_and_ids_sequential(small_sim):
    config, pageviews, sessions, truth = small_sim
    assert all(not validate_pageview(p) for p in pageviews)
    assert all(not validate_session(s) for s in sessions)
    assert [p.detail_id for p in pageviews] == list(range(1, len(pageviews) + 1))
    assert sorted(s.session_id for s in sessions) == list(range(1, len(sessions) + 1))
    times = [p.detail_date_time for p in pageviews]
    assert times == sorted(times)
    assert sum(s.page_count for s in sessions) == len(pageviews)
    assert set(truth.anomaly) == {p.detail_id for p in pageviews}


def test_pages_per_session_matches_analytic_expectation(small_sim):
    config, pageviews, sessions, _ = small_sim
    expected = expected_counts(config)
    assert len(pageviews) / len(sessions) == pytest.approx(expected["pages_per_session"], rel=0.05)
    # per-user activity persists across days, so the session total is overdispersed
    assert len(sessions) == pytest.approx(expected["sessions"], rel=0.12)


def test_ground_truth_consistency(small_sim):
    config, pageviews, sessions, truth = small_sim
    origin = config.start_epoch
    for p in pageviews:
        if truth.anomaly[p.detail_id]:
            assert any(r.covers(p.server_id, p.detail_date_time - origin)
                       for r in config.anomaly_regimes)
    login = {s.session_id: s.session_login_status for s in sessions}
    for sid, cause in truth.exit_cause.items():
        if cause == EXIT_TIMEOUT:
            assert login[sid] == 1
    flipped = sum(s.exit_method != truth.exit_cause[s.session_id] for s in sessions)
    lo, hi = binomial_interval(len(sessions), config.label_noise, 0.999)
    assert lo <= flipped <= hi
    assert {sid for sid, _ in exit_events(sessions)} == \
        {s.session_id for s in sessions if s.exit_method != 0}


def test_last_service_follows_obis(small_sim):
    _, _, sessions, _ = small_sim
    multi = [s for s in sessions if s.p_obis > 0 and s.page_count > 1]
    share = np.mean([s.exit_srv_id == 3 for s in multi])
    assert share > 0.9


def test_anomaly_rate_within_binomial_band():
    regimes = (AnomalyRegime(1, 0, math.inf, 20.0, 0.02),)
    probe = SimConfig(seed=8, user_count=1, server_count=1, anomaly_regimes=regimes)
    users = math.ceil(11000 / expected_counts(probe)["pageviews"])
    pageviews, _, truth = generate(replace(probe, user_count=users))
    assert len(pageviews) >= 10000
    flagged = sum(truth.anomaly[p.detail_id] for p in pageviews[:10000])
    assert 152 <= flagged <= 249
    # the exact central 99% interval is narrower than the documented band
    assert binomial_interval(10000, 0.02) == (165, 237)


def test_degenerate_exit_rule_always_logs_out():
    config = SimConfig(seed=1, user_count=50, exit_bias=100.0, label_noise=0.0)
    _, sessions, _ = generate(config)
    assert {s.exit_method for s in sessions} == {EXIT_LOGOUT}


@pytest.mark.parametrize("name, kind, target", [
    ("paper-day", "pageviews", 787_637),
    ("paper-week", "sessions", 514_879),
    ("paper-month", "sessions", 1_220_916),
    ("desk", "sessions", 50_000),
])
def test_presets_hit_their_targets(name, kind, target):
    config = scale_preset(name)
    assert expected_counts(config)[kind] == pytest.approx(target, rel=1e-3)


def test_desk_preset_has_label_noise():
    assert scale_preset("desk").label_noise == 0.05
    assert scale_preset("paper-day").label_noise == 0.0
    with pytest.raises(ConfigError, match="unknown preset"):
        scale_preset("huge")


@pytest.mark.parametrize("change, field", [
    ({"server_count": 11}, "server_count"),
    ({"login_rate": 1.5}, "login_rate"),
    ({"label_noise": 0.5}, "label_noise"),
    ({"start_date": "2022/11/22"}, "start_date"),
    ({"anomaly_regimes": (AnomalyRegime(9, 0, 10, 2.0, 0.1),)}, "anomaly_regimes"),
])
def test_invalid_settings_name_the_field(change, field):
    with pytest.raises(ConfigError) as info:
        replace(SimConfig(), **change)
    assert str(info.value).startswith(field)


def test_key_value_round_trip():
    config = SimConfig(seed=9, anomaly_regimes=(AnomalyRegime(2, 0, math.inf, 5.0, 0.1),))
    assert SimConfig.from_pairs(dict(config.to_pairs())) == config
    with pytest.raises(ConfigError, match="^bogus"):
        SimConfig.from_pairs({"bogus": "1"})
