"""Deterministic synthetic traffic for a load-balanced multi-server portal.

Each session walks a first-order Markov chain over the services and
then receives labels from planted rules:

* exit method: logout becomes likely once a logged-in user has visited
  obis; a logged-in session that did not log out may instead idle past
  the timeout (class 2); finally the label is flipped with probability
  ``label_noise`` to a uniformly chosen other class;
* last service: the final page is moved to obis if obis was visited,
  else to mail, else to gate, which makes the per-service counts
  predictive of the exit service;
* mail usage: a per-session intent depending on user type and hour.

Load times are log-normal per server and are multiplied inside anomaly
regimes, which produces the ground-truth anomaly flags.

Every session draws from its own stream keyed by (seed, user, day,
index), so the output does not depend on how users are split across
worker processes.
"""

from __future__ import annotations

import calendar
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

import numpy as np

from .core import (
    EXIT_DIRECT,
    EXIT_LOGOUT,
    EXIT_TIMEOUT,
    SERVICES,
    ConfigError,
    PageviewRecord,
    SessionRecord,
    age_group,
)
from .enrich import sessionize
from .seeding import derive

GATE, MAIL, OBIS = 0, 1, 2  # service indices (0-based)
DAY = 86400


@dataclass(frozen=True)
class AnomalyRegime:
    """Load-time multiplier applied with probability ``rate`` on one server.

    ``start``/``end`` are seconds from the simulation start; ``end`` may
    be ``inf`` for an open window.
    """

    server_id: int
    start: float
    end: float
    magnitude: float
    rate: float

    def covers(self, server_id: int, offset: float) -> bool:
        return server_id == self.server_id and self.start <= offset < self.end


_DEFAULT_TRANSITIONS = (
    # gate  mail  obis  abis  pbis  menu  exit
    (0.10, 0.12, 0.42, 0.04, 0.04, 0.10, 0.18),
    (0.08, 0.40, 0.20, 0.02, 0.02, 0.06, 0.22),
    (0.05, 0.05, 0.55, 0.03, 0.02, 0.05, 0.25),
    (0.10, 0.05, 0.20, 0.35, 0.05, 0.05, 0.20),
    (0.10, 0.05, 0.20, 0.05, 0.35, 0.05, 0.20),
    (0.12, 0.08, 0.40, 0.08, 0.08, 0.04, 0.20),
)

# Diurnal session-start profile, one weight per hour.
_DEFAULT_HOURLY = (1, 0.6, 0.4, 0.3, 0.3, 0.5, 1, 2, 4, 6, 7, 7,
                   6, 6, 7, 7, 6, 5, 4, 4, 4, 3, 2, 1.5)

_DEFAULT_REGIMES = (
    AnomalyRegime(3, 9 * 3600, 12 * 3600, 20.0, 0.25),
    AnomalyRegime(6, 13 * 3600, 17 * 3600, 15.0, 0.15),
)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    user_count: int = 1000
    day_count: int = 1
    start_date: str = "2022-11-22"
    server_count: int = 7
    services: tuple[str, ...] = SERVICES
    # sessions per user per day ~ Poisson(rate * activity), activity log-normal with mean 1
    sessions_per_user_day: float = 1.5
    activity_sigma: float = 0.5
    hourly_weights: tuple[float, ...] = _DEFAULT_HOURLY
    start_probs: tuple[float, ...] = (0.32, 0.15, 0.32, 0.04, 0.04, 0.13)
    transitions: tuple[tuple[float, ...], ...] = _DEFAULT_TRANSITIONS
    max_pages: int = 100
    # demographics
    user_type_weights: tuple[float, ...] = (0.03, 0.04, 0.06, 0.08, 0.06, 0.68, 0.05)
    login_rate: float = 0.75
    # mail intent: per user type probability, scaled outside working hours
    mail_intent_by_type: tuple[float, ...] = (0.2, 0.7, 0.6, 0.8, 0.5, 0.25, 0.1)
    mail_off_hours_factor: float = 0.4
    # dwell (page duration) in seconds
    dwell_median: float = 30.0
    dwell_sigma: float = 1.0
    dwell_cap: int = 900
    # exit-method rule: P(logout) = sigmoid(sharpness * (w_login*login + w_obis*min(p_obis, cap) + bias))
    exit_sharpness: float = 6.0
    exit_weight_login: float = 6.0
    exit_weight_obis: float = 2.0
    exit_obis_cap: float = 2.0
    exit_bias: float = -7.0
    idle_rate: float = 0.128
    idle_timeout: int = 1200
    idle_extra: int = 300
    label_noise: float = 0.0
    last_service_noise: float = 0.05
    # load times, seconds: log-normal per server
    load_median: tuple[float, ...] = (0.12, 0.14, 0.16, 0.13, 0.15, 0.17, 0.12, 0.14, 0.16, 0.13)
    load_sigma: tuple[float, ...] = (0.5,) * 10
    anomaly_regimes: tuple[AnomalyRegime, ...] = _DEFAULT_REGIMES
    id_base: int = 1

    def __post_init__(self):
        validate_config(self)

    @property
    def start_epoch(self) -> int:
        y, m, d = (int(p) for p in self.start_date.split("-"))
        return calendar.timegm((y, m, d, 0, 0, 0))

    def to_pairs(self) -> list[tuple[str, str]]:
        return [(f.name, _render(getattr(self, f.name))) for f in fields(self)]

    @classmethod
    def from_pairs(cls, pairs: Mapping[str, str], base: "SimConfig | None" = None) -> "SimConfig":
        """Build from ``key = value`` strings, starting from ``base`` (or defaults)."""
        base = base or cls()
        known = {f.name for f in fields(cls)}
        changes = {}
        for key, text in pairs.items():
            if key not in known:
                raise ConfigError(f"{key}: unknown simulation setting")
            try:
                changes[key] = _parse_like(getattr(base, key), text, key)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from None
        return replace(base, **changes)


def _render(value) -> str:
    if isinstance(value, AnomalyRegime):
        return ",".join(_render(getattr(value, f.name)) for f in fields(value))
    if isinstance(value, tuple):
        if value and isinstance(value[0], (tuple, AnomalyRegime)):
            return "; ".join(_render(v) for v in value)
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_like(template, text: str, key: str):
    text = text.strip()
    if key == "anomaly_regimes":
        regimes = []
        for chunk in filter(None, (c.strip() for c in text.split(";"))):
            parts = [p.strip() for p in chunk.split(",")]
            if len(parts) != 5:
                raise ValueError("regime needs server,start,end,magnitude,rate")
            regimes.append(AnomalyRegime(int(parts[0]), float(parts[1]), float(parts[2]),
                                         float(parts[3]), float(parts[4])))
        return tuple(regimes)
    if key == "transitions":
        return tuple(tuple(float(x) for x in row.split(",")) for row in text.split(";"))
    if key == "services":
        return tuple(s.strip() for s in text.split(","))
    if isinstance(template, tuple):
        return tuple(float(x) for x in text.split(","))
    if isinstance(template, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    return text


def _rate(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name}: rate must lie in [0, 1], got {value}")


def validate_config(c: SimConfig) -> None:
    if not 1 <= c.server_count <= 10:
        raise ConfigError(f"server_count: must be in [1, 10], got {c.server_count}")
    if c.user_count < 1 or c.day_count < 1:
        raise ConfigError("user_count: and day_count must be ≥ 1")
    if tuple(c.services) != SERVICES:
        raise ConfigError(f"services: only the fixed service set {SERVICES} is supported")
    k = len(c.services)
    if len(c.start_probs) != k or abs(sum(c.start_probs) - 1.0) > 1e-9 or min(c.start_probs) < 0:
        raise ConfigError("start_probs: need one non-negative weight per service summing to 1")
    if len(c.transitions) != k:
        raise ConfigError(f"transitions: need {k} rows")
    for i, row in enumerate(c.transitions):
        if len(row) != k + 1:
            raise ConfigError(f"transitions: row {i} needs {k + 1} entries (services then exit)")
        if min(row) < 0 or abs(sum(row) - 1.0) > 1e-9:
            raise ConfigError(f"transitions: row {i} must be non-negative and sum to 1 ± 1e-9")
    if len(c.hourly_weights) != 24 or min(c.hourly_weights) < 0 or sum(c.hourly_weights) <= 0:
        raise ConfigError("hourly_weights: need 24 non-negative weights")
    if min(c.user_type_weights) < 0 or sum(c.user_type_weights) <= 0:
        raise ConfigError("user_type_weights: need non-negative weights")
    if len(c.mail_intent_by_type) != len(c.user_type_weights):
        raise ConfigError("mail_intent_by_type: one rate per user type")
    for i, r in enumerate(c.mail_intent_by_type):
        _rate(f"mail_intent_by_type[{i}]", r)
    for name in ("login_rate", "idle_rate", "last_service_noise", "mail_off_hours_factor"):
        _rate(name, getattr(c, name))
    if not 0.0 <= c.label_noise < 0.5:
        raise ConfigError(f"label_noise: must lie in [0, 0.5), got {c.label_noise}")
    if c.sessions_per_user_day < 0 or c.activity_sigma < 0:
        raise ConfigError("sessions_per_user_day: and activity_sigma must be ≥ 0")
    if c.dwell_median <= 0 or c.dwell_sigma < 0 or c.dwell_cap < 1:
        raise ConfigError("dwell_median: dwell parameters must be positive")
    if c.max_pages < 1:
        raise ConfigError("max_pages: must be ≥ 1")
    if len(c.load_median) < c.server_count or len(c.load_sigma) < c.server_count:
        raise ConfigError("load_median: need one load-time median and sigma per server")
    if min(c.load_median[:c.server_count]) <= 0 or min(c.load_sigma[:c.server_count]) < 0:
        raise ConfigError("load_median: medians must be > 0 and sigmas ≥ 0")
    for i, reg in enumerate(c.anomaly_regimes):
        if not 1 <= reg.server_id <= c.server_count:
            raise ConfigError(f"anomaly_regimes[{i}]: server {reg.server_id} outside 1..{c.server_count}")
        _rate(f"anomaly_regimes[{i}].rate", reg.rate)
        if reg.magnitude <= 0 or reg.end < reg.start:
            raise ConfigError(f"anomaly_regimes[{i}]: needs magnitude > 0 and start ≤ end")
    try:
        c.start_epoch
    except ValueError:
        raise ConfigError(f"start_date: expected YYYY-MM-DD, got {c.start_date!r}") from None


@dataclass
class GroundTruth:
    anomaly: dict[int, int] = field(default_factory=dict)  # detail_id -> flag
    exit_cause: dict[int, int] = field(default_factory=dict)  # session_id -> pre-noise class
    last_service: dict[int, int] = field(default_factory=dict)  # session_id -> service id


# ---- chain utilities -----------------------------------------------------

def _masked_chain(c: SimConfig, allow_obis: bool, mail_intent: bool):
    """Start vector and row-stochastic transition rows with disallowed services removed."""
    k = len(c.services)
    allowed = np.ones(k + 1, dtype=bool)
    if not allow_obis:
        allowed[OBIS] = False
    if not mail_intent:
        allowed[MAIL] = False
    P = np.array(c.transitions, dtype=float) * allowed
    P /= P.sum(axis=1, keepdims=True)
    if mail_intent:
        start = np.zeros(k)
        start[MAIL] = 1.0
    else:
        start = np.array(c.start_probs, dtype=float) * allowed[:k]
        start /= start.sum()
    return start, P


def _expected_length(start: np.ndarray, P: np.ndarray) -> float:
    Q = P[:, :-1]
    N = np.linalg.inv(np.eye(len(Q)) - Q)
    return float(start @ N @ np.ones(len(Q)))


def _visit_probability(start: np.ndarray, P: np.ndarray, target: int) -> float:
    """Probability the walk ever enters ``target`` (made absorbing)."""
    Q = P[:, :-1].copy()
    Q[target] = 0.0
    N = np.linalg.inv(np.eye(len(Q)) - Q)
    return float(start @ N[:, target])


def _intent_probability(c: SimConfig, user_type: int, hour: int) -> float:
    p = c.mail_intent_by_type[user_type - 1]
    return p if 8 <= hour < 18 else p * c.mail_off_hours_factor


def expected_counts(c: SimConfig) -> dict[str, float]:
    """Analytic expectations (cap on pages ignored) for sizing presets."""
    tw = np.array(c.user_type_weights) / sum(c.user_type_weights)
    hw = np.array(c.hourly_weights) / sum(c.hourly_weights)
    p_intent = float(sum(tw[t] * hw[h] * _intent_probability(c, t + 1, h)
                         for t in range(len(tw)) for h in range(24)))
    length = 0.0
    obis_given_login = 0.0
    for intent, pi in ((True, p_intent), (False, 1 - p_intent)):
        for login, pl in ((True, c.login_rate), (False, 1 - c.login_rate)):
            start, P = _masked_chain(c, login, intent)
            length += pi * pl * _expected_length(start, P)
            if login:
                obis_given_login += pi * _visit_probability(start, P, OBIS)
    sessions = c.user_count * c.day_count * c.sessions_per_user_day
    return {"sessions": sessions, "pageviews": sessions * length, "pages_per_session": length,
            "mail_intent_rate": p_intent, "obis_given_login": obis_given_login}


# ---- per-session simulation ----------------------------------------------

def _sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def _choice(rng: random.Random, cumulative: list[float]) -> int:
    u = rng.random() * cumulative[-1]
    for i, edge in enumerate(cumulative):
        if u < edge:
            return i
    return len(cumulative) - 1


def _cumulative(weights) -> list[float]:
    out, total = [], 0.0
    for w in weights:
        total += w
        out.append(total)
    return out


@dataclass(frozen=True)
class _User:
    index: int
    user_id: int
    user_type: int
    sex: int
    age: int
    language_tr: int
    location: int
    browser: int
    activity: float


class _Tables:
    """Precomputed cumulative tables shared by every session of one config."""

    def __init__(self, c: SimConfig):
        self.hours = _cumulative(c.hourly_weights)
        self.types = _cumulative(c.user_type_weights)
        self.chains = {}
        for login in (False, True):
            for intent in (False, True):
                start, P = _masked_chain(c, login, intent)
                self.chains[(login, intent)] = (_cumulative(start),
                                                [_cumulative(row) for row in P])
        self.mu = [math.log(m) for m in c.load_median]
        self.dwell_mu = math.log(c.dwell_median)


def _make_user(c: SimConfig, tables: _Tables, u: int) -> _User:
    rng = random.Random(derive(c.seed, 1, u))
    user_type = _choice(rng, tables.types) + 1
    if user_type == 6:  # students
        age = rng.randint(18, 28)
    else:
        age = rng.randint(23, 65)
    activity = rng.lognormvariate(-0.5 * c.activity_sigma ** 2, c.activity_sigma)
    return _User(u, 100000 + u, user_type, rng.choice((1, 2)), age,
                 1 if rng.random() < 0.9 else 0, rng.randint(1, 5), rng.randint(1, 5), activity)


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth's method; lam is small (a few sessions per day)
    limit, k, p = math.exp(-lam), 0, rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def _simulate_session(c: SimConfig, tables: _Tables, user: _User, day: int, idx: int,
                      origin: int):
    rng = random.Random(derive(c.seed, 2, user.index, day, idx))
    hour = _choice(rng, tables.hours)
    offset = day * DAY + hour * 3600 + rng.randrange(3600)
    login = rng.random() < c.login_rate
    intent = rng.random() < _intent_probability(c, user.user_type, hour)
    start_cum, rows = tables.chains[(login, intent)]
    referer = rng.randint(1, 6)

    walk = [_choice(rng, start_cum)]
    exit_col = len(c.services)
    while len(walk) < c.max_pages:
        nxt = _choice(rng, rows[walk[-1]])
        if nxt == exit_col:
            break
        walk.append(nxt)
    if len(walk) > 1 and rng.random() >= c.last_service_noise:
        if OBIS in walk:
            walk[-1] = OBIS
        elif MAIL in walk:
            walk[-1] = MAIL
        elif GATE in walk:
            walk[-1] = GATE

    p_obis = walk.count(OBIS)
    score = (c.exit_weight_login * login + c.exit_weight_obis * min(p_obis, c.exit_obis_cap)
             + c.exit_bias)
    if rng.random() < _sigmoid(c.exit_sharpness * score):
        cause = EXIT_LOGOUT
    elif login and rng.random() < c.idle_rate:
        cause = EXIT_TIMEOUT
    else:
        cause = EXIT_DIRECT
    label = cause
    if rng.random() < c.label_noise:
        label = rng.choice([m for m in (EXIT_DIRECT, EXIT_LOGOUT, EXIT_TIMEOUT) if m != cause])

    pages = []
    t = offset
    for position, service in enumerate(walk):
        dwell = min(c.dwell_cap, max(1, int(rng.lognormvariate(tables.dwell_mu, c.dwell_sigma))))
        if position == len(walk) - 1 and cause == EXIT_TIMEOUT:
            dwell = c.idle_timeout + rng.randrange(c.idle_extra + 1)
        server = rng.randrange(c.server_count) + 1
        load = rng.lognormvariate(tables.mu[server - 1], c.load_sigma[server - 1])
        flag = 0
        for regime in c.anomaly_regimes:
            if regime.covers(server, t):
                if rng.random() < regime.rate:
                    load *= regime.magnitude
                    flag = 1
                break
        load = max(0.001, round(load, 3))
        current = 1 if login and not (position == 0 and service == GATE) else 0
        pages.append((origin + t, service + 1, server, dwell, load, flag, current))
        t += dwell
    return (origin + offset, user.index, day, idx, int(login), referer, label, cause, pages)


def _simulate_users(args):
    c, lo, hi = args
    tables = _Tables(c)
    origin = c.start_epoch
    out = []
    for u in range(lo, hi):
        user = _make_user(c, tables, u)
        for day in range(c.day_count):
            drng = random.Random(derive(c.seed, 3, u, day))
            for idx in range(_poisson(drng, c.sessions_per_user_day * user.activity)):
                out.append((user, _simulate_session(c, tables, user, day, idx, origin)))
    return out


def generate(config: SimConfig, workers: int = 1):
    """Return ``(pageviews, sessions, ground_truth)``.

    Records are assembled in canonical order: sessions by (start time,
    user, day, index), pageviews by (time, session id, position), and ids
    are assigned sequentially from ``config.id_base``. The result is
    identical for any ``workers``.
    """
    n = config.user_count
    if workers > 1:
        bounds = np.linspace(0, n, min(workers * 4, n) + 1).astype(int)
        jobs = [(config, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(workers) as pool:
            raw = [item for chunk in pool.map(_simulate_users, jobs) for item in chunk]
    else:
        raw = _simulate_users((config, 0, n))
    raw.sort(key=lambda item: item[1][:4])

    truth = GroundTruth()
    flat = []
    for s_pos, (user, sess) in enumerate(raw):
        sid = config.id_base + s_pos
        _, _, _, _, login, referer, label, cause, pages = sess
        truth.exit_cause[sid] = cause
        truth.last_service[sid] = pages[-1][1]
        for position, page in enumerate(pages):
            flat.append((page[0], sid, position, user, login, referer, page))
    flat.sort(key=lambda item: item[:3])

    pageviews = []
    for d_pos, (t, sid, _, user, login, referer, page) in enumerate(flat):
        did = config.id_base + d_pos
        _, service, server, dwell, load, flag, current = page
        truth.anomaly[did] = flag
        pageviews.append(PageviewRecord(
            detail_id=did, session_id=sid, detail_date_time=t,
            user_id=user.user_id if login else 0,
            current_login_status=current, session_login_status=login,
            user_type=user.user_type, sex=user.sex, age=user.age, age_group=age_group(user.age),
            user_language_tr=user.language_tr, user_location=user.location,
            browser_type=user.browser, referer_type=referer,
            server_id=server, service_id=service, page_duration=dwell, page_load_time=load))

    labels = {config.id_base + i: sess[6] for i, (_, sess) in enumerate(raw)}
    exit_events = {sid: m for sid, m in labels.items() if m != EXIT_DIRECT}
    sessions, diagnostics = sessionize(pageviews, exit_events)
    assert not diagnostics, diagnostics
    return pageviews, sessions, truth


def exit_events(sessions: list[SessionRecord]) -> list[tuple[int, int]]:
    """Logout and timeout events as (session id, exit method); direct leaves leave no event."""
    return [(s.session_id, s.exit_method) for s in sessions if s.exit_method != EXIT_DIRECT]


# ---- presets -------------------------------------------------------------

PRESETS = ("paper-day", "paper-week", "paper-month", "desk")

# (start date, days, target kind, target count)
_PRESET_TARGETS = {
    "paper-day": ("2022-11-22", 1, "pageviews", 787_637),
    "paper-week": ("2022-11-21", 7, "sessions", 514_879),
    "paper-month": ("2022-11-01", 30, "sessions", 1_220_916),
    "desk": ("2022-11-21", 7, "sessions", 50_000),
}


def scale_preset(name: str, seed: int = 0, **overrides) -> SimConfig:
    """Config whose expected record count matches the preset's target."""
    if name not in _PRESET_TARGETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    start, days, kind, target = _PRESET_TARGETS[name]
    extra = {"label_noise": 0.05} if name == "desk" else {}
    extra.update(overrides)
    probe = SimConfig(seed=seed, user_count=1, day_count=days, start_date=start, **extra)
    per_user = expected_counts(probe)[kind]
    return replace(probe, user_count=max(1, round(target / per_user)))
