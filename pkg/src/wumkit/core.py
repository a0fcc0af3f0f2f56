"""Domain records, category domains and dataset fingerprinting."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

SERVICES = ("gate", "mail", "obis", "abis", "pbis", "menu")

# Age_Group bins are not published; these are documented, not claimed.
AGE_GROUP_BOUNDS = (25, 35, 45, 55)

EXIT_DIRECT, EXIT_LOGOUT, EXIT_TIMEOUT = 0, 1, 2
EXIT_METHODS = (EXIT_DIRECT, EXIT_LOGOUT, EXIT_TIMEOUT)


class WumError(Exception):
    """Base class for all package errors."""


class ConfigError(WumError):
    pass


class DataError(WumError):
    pass


class SchemaError(DataError):
    pass


def age_group(age: int) -> int:
    """Map age in years to a group code; 0 means unknown age."""
    if age <= 0:
        return 0
    for code, bound in enumerate(AGE_GROUP_BOUNDS, start=1):
        if age < bound:
            return code
    return len(AGE_GROUP_BOUNDS) + 1


@dataclass(frozen=True)
class Domains:
    """Allowed value ranges for categorical pageview fields (inclusive)."""

    server_count: int = 10
    service_count: int = len(SERVICES)
    user_type: tuple[int, int] = (0, 9)
    sex: tuple[int, ...] = (0, 1, 2)
    age: tuple[int, int] = (0, 120)
    age_group: tuple[int, int] = (0, len(AGE_GROUP_BOUNDS) + 1)
    user_location: tuple[int, int] = (0, 9)
    browser_type: tuple[int, int] = (0, 9)
    referer_type: tuple[int, int] = (0, 9)


DEFAULT_DOMAINS = Domains()


@dataclass(frozen=True)
class PageviewRecord:
    detail_id: int
    session_id: int
    detail_date_time: int  # epoch seconds, UTC
    user_id: int
    current_login_status: int
    session_login_status: int
    user_type: int
    sex: int
    age: int
    age_group: int
    user_language_tr: int
    user_location: int
    browser_type: int
    referer_type: int
    server_id: int
    service_id: int
    page_duration: int
    page_load_time: float


@dataclass(frozen=True)
class SessionRecord:
    session_id: int
    user_type: int
    sex: int
    age: int
    user_language_tr: int
    user_location: int
    browser_type: int
    referer_type: int
    landing_srv_id: int
    exit_srv_id: int
    session_login_status: int
    page_count: int
    service_count: int
    total_session_duration: int
    avg_page_duration: float
    total_page_load: float
    p_gate: int
    p_mail: int
    p_obis: int
    p_abis: int
    p_pbis: int
    p_menu: int
    exit_method: int
    log_date_time: int  # epoch seconds, UTC
    log_date: int  # epoch seconds at 00:00 UTC of the start day

    @property
    def service_counts(self) -> tuple[int, ...]:
        return (self.p_gate, self.p_mail, self.p_obis, self.p_abis, self.p_pbis, self.p_menu)


PAGEVIEW_FIELDS = tuple(f.name for f in fields(PageviewRecord))
SESSION_FIELDS = tuple(f.name for f in fields(SessionRecord))


def _in_range(value: int, bounds: tuple[int, int]) -> bool:
    return bounds[0] <= value <= bounds[1]


def validate_pageview(record: PageviewRecord, domains: Domains = DEFAULT_DOMAINS) -> list[str]:
    """Return every violated invariant of ``record``; an empty list means valid."""
    v = []
    if record.session_id is None:
        v.append("session_id non-null")
    if record.page_duration < 0:
        v.append("page_duration ≥ 0")
    if not record.page_load_time >= 0:
        v.append("page_load_time ≥ 0")
    if record.user_id < 0:
        v.append("user_id ≥ 0")
    for name in ("current_login_status", "session_login_status", "user_language_tr"):
        if getattr(record, name) not in (0, 1):
            v.append(f"{name} ∈ {{0,1}}")
    if record.sex not in domains.sex:
        v.append("sex ∈ {1,2}")
    for name in ("user_type", "age", "age_group", "user_location", "browser_type", "referer_type"):
        lo, hi = getattr(domains, name)
        if not _in_range(getattr(record, name), (lo, hi)):
            v.append(f"{name} ∈ [{lo},{hi}]")
    if not _in_range(record.server_id, (1, domains.server_count)):
        v.append(f"server_id ∈ [1,{domains.server_count}]")
    if not _in_range(record.service_id, (1, domains.service_count)):
        v.append(f"service_id ∈ [1,{domains.service_count}]")
    return v


def validate_session(record: SessionRecord) -> list[str]:
    v = []
    counts = record.service_counts
    if record.page_count < 1:
        v.append("page_count ≥ 1")
    if any(c < 0 for c in counts):
        v.append("p_* ≥ 0")
    if sum(counts) != record.page_count:
        v.append("p_* sum mismatch")
    if record.service_count != sum(1 for c in counts if c > 0):
        v.append("service_count = number of nonzero p_*")
    if record.page_count >= 1 and abs(record.avg_page_duration * record.page_count
                                      - record.total_session_duration) > 0.5:
        v.append("avg_page_duration × page_count = total_session_duration")
    if record.total_session_duration < 0 or record.total_page_load < 0:
        v.append("durations ≥ 0")
    if record.exit_method not in EXIT_METHODS:
        v.append("exit_method ∈ {0,1,2}")
    if record.session_login_status not in (0, 1):
        v.append("session_login_status ∈ {0,1}")
    for name in ("landing_srv_id", "exit_srv_id"):
        if not 1 <= getattr(record, name) <= len(counts):
            v.append(f"{name} ∈ [1,{len(counts)}]")
    return v


def _canonical_line(record) -> str:
    parts = []
    for value in (getattr(record, f.name) for f in fields(record)):
        parts.append(f"{value:.3f}" if isinstance(value, float) else str(value))
    return ",".join(parts)


def _sort_key(record):
    if isinstance(record, PageviewRecord):
        return record.detail_id
    if isinstance(record, SessionRecord):
        return record.session_id
    # dataclass rows without an id field sort by their canonical text
    return _canonical_line(record)


def dataset_fingerprint(rows: Iterable) -> str:
    """64-bit BLAKE2b over the canonically sorted rows, as 16 hex digits.

    The empty dataset hashes to ``EMPTY_FINGERPRINT``.
    """
    h = hashlib.blake2b(digest_size=8)
    for record in sorted(rows, key=_sort_key):
        h.update(_canonical_line(record).encode())
        h.update(b"\n")
    return h.hexdigest()


EMPTY_FINGERPRINT = hashlib.blake2b(b"", digest_size=8).hexdigest()


@dataclass(frozen=True)
class FeatureMatrix:
    """Numeric design matrix with labels and per-column metadata.

    ``column_groups`` names the source field of each column so one-hot
    blocks can be folded back together (feature importance does this).
    """

    column_names: tuple[str, ...]
    column_kinds: tuple[str, ...]
    column_groups: tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    categories: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if rows.ndim != 2 or rows.shape[1] != len(self.column_names):
            raise SchemaError(f"rows must be n x {len(self.column_names)}, got {rows.shape}")
        if len(self.column_kinds) != len(self.column_names) or len(self.column_groups) != len(self.column_names):
            raise SchemaError("column metadata lengths differ")
        if len(labels) != len(rows):
            raise SchemaError("labels and rows differ in length")
        if not np.all(np.isfinite(rows)):
            raise DataError("feature matrix contains NaN or infinite values")
        if len(labels) and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label outside class range")
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_columns(self) -> int:
        return self.rows.shape[1]

    def take(self, index: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        index = np.asarray(index, dtype=np.int64)
        return FeatureMatrix(self.column_names, self.column_kinds, self.column_groups,
                             self.rows[index], self.labels[index], self.class_names,
                             self.categories)

    def with_rows(self, rows: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.column_names, self.column_kinds, self.column_groups,
                             rows, self.labels, self.class_names, self.categories)

    def schema(self) -> dict:
        return {"column_names": list(self.column_names),
                "column_kinds": list(self.column_kinds),
                "column_groups": list(self.column_groups)}
