import os
from dataclasses import replace

import numpy as np
import pytest

os.environ.setdefault("SOURCE_DATE_EPOCH", "1700000000")

from wumkit.core import FeatureMatrix, PageviewRecord, SessionRecord  # noqa: E402
from wumkit.farmsim import SimConfig, generate  # noqa: E402


def make_matrix(X, y, class_names=None, names=None) -> FeatureMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.int64)
    d = X.shape[1]
    names = tuple(names or (f"x{j}" for j in range(d)))
    k = int(y.max()) + 1 if len(y) else 1
    class_names = tuple(class_names or (str(i) for i in range(max(k, 2))))
    return FeatureMatrix(names, ("numeric",) * d, names, X, y, class_names)


def sample_pageview(**changes) -> PageviewRecord:
    base = PageviewRecord(detail_id=89010871, session_id=83665107, detail_date_time=1668949260,
                          user_id=184922, current_login_status=1, session_login_status=1,
                          user_type=6, sex=2, age=18, age_group=1, user_language_tr=1,
                          user_location=1, browser_type=1, referer_type=6, server_id=4,
                          service_id=3, page_duration=41, page_load_time=0.122)
    return replace(base, **changes)


@pytest.fixture(scope="session")
def small_sim():
    """About 2 300 sessions over two days; shared by many tests."""
    config = SimConfig(seed=11, user_count=800, day_count=2, label_noise=0.05)
    return config, *generate(config)


def random_pageviews(rng: np.random.Generator, n: int) -> list[PageviewRecord]:
    ids = rng.choice(10**9, size=n, replace=False) + 1
    out = []
    for i in range(n):
        age = int(rng.integers(0, 121))
        out.append(PageviewRecord(
            detail_id=int(ids[i]), session_id=int(rng.integers(1, 10**9)),
            detail_date_time=int(rng.integers(946684800, 2524608000)),
            user_id=int(rng.integers(0, 10**7)),
            current_login_status=int(rng.integers(0, 2)),
            session_login_status=int(rng.integers(0, 2)),
            user_type=int(rng.integers(0, 10)), sex=int(rng.integers(0, 3)), age=age,
            age_group=int(rng.integers(0, 6)), user_language_tr=int(rng.integers(0, 2)),
            user_location=int(rng.integers(0, 10)), browser_type=int(rng.integers(0, 10)),
            referer_type=int(rng.integers(0, 10)), server_id=int(rng.integers(1, 11)),
            service_id=int(rng.integers(1, 7)), page_duration=int(rng.integers(0, 100000)),
            page_load_time=round(float(rng.uniform(0, 100)), 3)))
    return out


def random_sessions(rng: np.random.Generator, n: int) -> list[SessionRecord]:
    ids = rng.choice(10**9, size=n, replace=False) + 1
    out = []
    for i in range(n):
        counts = rng.integers(0, 6, size=6)
        if counts.sum() == 0:
            counts[int(rng.integers(0, 6))] = 1
        pages = int(counts.sum())
        total = int(rng.integers(0, 50000))
        start = int(rng.integers(946684800, 2524608000))
        out.append(SessionRecord(
            session_id=int(ids[i]), user_type=int(rng.integers(0, 10)),
            sex=int(rng.integers(0, 3)), age=int(rng.integers(0, 121)),
            user_language_tr=int(rng.integers(0, 2)), user_location=int(rng.integers(0, 10)),
            browser_type=int(rng.integers(0, 10)), referer_type=int(rng.integers(0, 10)),
            landing_srv_id=int(rng.integers(1, 7)), exit_srv_id=int(rng.integers(1, 7)),
            session_login_status=int(rng.integers(0, 2)), page_count=pages,
            service_count=int(np.count_nonzero(counts)), total_session_duration=total,
            avg_page_duration=round(total / pages, 3),
            total_page_load=round(float(rng.uniform(0, 500)), 3),
            p_gate=int(counts[0]), p_mail=int(counts[1]), p_obis=int(counts[2]),
            p_abis=int(counts[3]), p_pbis=int(counts[4]), p_menu=int(counts[5]),
            exit_method=int(rng.integers(0, 3)), log_date_time=start,
            log_date=start - start % 86400))
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
