"""Reader and writer for the pageview and session CSV formats.

Pageview files carry the 18 enriched fields in their canonical order,
session files carry the session id, the 20 modelling features, then the
referer, exit label and start timestamps. Timestamps default to
``MM.DD.YYYY HH:MM`` with an optional ``:SS`` suffix; ISO 8601 is
available through the schema's timestamp tag.
"""

from __future__ import annotations

import calendar
import io
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import IO, Callable, Iterable, Sequence, Union

from .core import (
    DEFAULT_DOMAINS,
    PAGEVIEW_FIELDS,
    Domains,
    PageviewRecord,
    SchemaError,
    SessionRecord,
    validate_pageview,
    validate_session,
)
from .enrich import EXIT_METHOD_FEATURES, Diagnostic

Source = Union[str, os.PathLike, IO]

TIMESTAMP_FORMATS = ("paper", "iso8601")


def header_name(attr: str) -> str:
    """``detail_id`` -> ``Detail_ID``; per-service counts keep their lower-case form."""
    if attr.startswith("p_"):
        return attr
    special = {"id": "ID", "tr": "TR"}
    return "_".join(special.get(w, w.capitalize()) for w in attr.split("_"))


# ---- scalar codecs -------------------------------------------------------

def _parse_int(text: str) -> int:
    return int(text)


def _parse_decimal(text: str) -> float:
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError("not finite")
    return value


def _format_int(value) -> str:
    return str(int(value))


def _format_decimal(value) -> str:
    return f"{value:.3f}"


def _parse_paper_timestamp(text: str) -> int:
    date, _, clock = text.strip().partition(" ")
    month, day, year = date.split(".")
    parts = clock.split(":")
    if len(parts) not in (2, 3) or len(year) != 4:
        raise ValueError("expected MM.DD.YYYY HH:MM[:SS]")
    hour, minute = int(parts[0]), int(parts[1])
    second = int(parts[2]) if len(parts) == 3 else 0
    datetime(int(year), int(month), int(day), hour, minute, second)  # range check
    return calendar.timegm((int(year), int(month), int(day), hour, minute, second))


def _format_paper_timestamp(t: int) -> str:
    d = datetime.fromtimestamp(t, timezone.utc)
    text = f"{d.month:02d}.{d.day:02d}.{d.year:04d} {d.hour:02d}:{d.minute:02d}"
    return text + f":{d.second:02d}" if d.second else text


def _parse_paper_date(text: str) -> int:
    month, day, year = text.strip().split(".")
    datetime(int(year), int(month), int(day))
    return calendar.timegm((int(year), int(month), int(day), 0, 0, 0))


def _format_paper_date(t: int) -> str:
    d = datetime.fromtimestamp(t, timezone.utc)
    return f"{d.month:02d}.{d.day:02d}.{d.year:04d}"


def _parse_iso_timestamp(text: str) -> int:
    d = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if d.tzinfo is None:
        d = d.replace(tzinfo=timezone.utc)
    return int(d.timestamp())


def _format_iso_timestamp(t: int) -> str:
    return datetime.fromtimestamp(t, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_iso_date(text: str) -> int:
    d = datetime.strptime(text.strip(), "%Y-%m-%d").replace(tzinfo=timezone.utc)
    return int(d.timestamp())


def _format_iso_date(t: int) -> str:
    return datetime.fromtimestamp(t, timezone.utc).strftime("%Y-%m-%d")


_CODECS = {
    ("integer", "paper"): (_parse_int, _format_int),
    ("decimal", "paper"): (_parse_decimal, _format_decimal),
    ("timestamp", "paper"): (_parse_paper_timestamp, _format_paper_timestamp),
    ("date", "paper"): (_parse_paper_date, _format_paper_date),
    ("timestamp", "iso8601"): (_parse_iso_timestamp, _format_iso_timestamp),
    ("date", "iso8601"): (_parse_iso_date, _format_iso_date),
}


def _codec(kind: str, timestamp_format: str):
    if kind in ("integer", "decimal"):
        return _CODECS[(kind, "paper")]
    return _CODECS[(kind, timestamp_format)]


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of one CSV format.

    ``field_names`` are the header labels, ``attributes`` the record
    attributes they map to and ``kinds`` one of integer, decimal,
    timestamp or date per column.
    """

    record_type: type
    field_names: tuple[str, ...]
    attributes: tuple[str, ...]
    kinds: tuple[str, ...]
    timestamp_format: str = "paper"

    def __post_init__(self):
        if self.timestamp_format not in TIMESTAMP_FORMATS:
            raise SchemaError(f"timestamp format must be one of {TIMESTAMP_FORMATS}")
        if not len(self.field_names) == len(self.attributes) == len(self.kinds):
            raise SchemaError("schema column lists differ in length")

    @property
    def parsers(self) -> tuple[Callable[[str], object], ...]:
        return tuple(_codec(k, self.timestamp_format)[0] for k in self.kinds)

    @property
    def formatters(self) -> tuple[Callable[[object], str], ...]:
        return tuple(_codec(k, self.timestamp_format)[1] for k in self.kinds)


_PAGEVIEW_KINDS = {"detail_date_time": "timestamp", "page_load_time": "decimal"}

_SESSION_ATTRS = ("session_id",) + tuple(f.lower() for f in EXIT_METHOD_FEATURES) + (
    "referer_type", "exit_method", "log_date_time", "log_date")
_SESSION_KINDS = {"avg_page_duration": "decimal", "total_page_load": "decimal",
                  "log_date_time": "timestamp", "log_date": "date"}


def pageview_schema(timestamp_format: str = "paper") -> CsvSchema:
    return CsvSchema(PageviewRecord, tuple(header_name(a) for a in PAGEVIEW_FIELDS),
                     PAGEVIEW_FIELDS,
                     tuple(_PAGEVIEW_KINDS.get(a, "integer") for a in PAGEVIEW_FIELDS),
                     timestamp_format)


def session_schema(timestamp_format: str = "paper") -> CsvSchema:
    return CsvSchema(SessionRecord, tuple(header_name(a) for a in _SESSION_ATTRS), _SESSION_ATTRS,
                     tuple(_SESSION_KINDS.get(a, "integer") for a in _SESSION_ATTRS),
                     timestamp_format)


PAGEVIEW_SCHEMA = pageview_schema()
SESSION_SCHEMA = session_schema()


# ---- stream helpers ------------------------------------------------------

def _read_text(source: Source) -> str:
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    with open(source, "r", encoding="utf-8", newline="") as fh:
        return fh.read()


def _check_header(line: str | None, schema: CsvSchema) -> None:
    if line is None:
        raise SchemaError(f"missing header row; expected first column {schema.field_names[0]!r}")
    found = [c.strip() for c in line.rstrip("\r").split(",")]
    for i, expected in enumerate(schema.field_names):
        got = found[i] if i < len(found) else None
        if got != expected:
            raise SchemaError(f"header column {i + 1}: expected {expected!r}, found {got!r}")
    if len(found) > len(schema.field_names):
        raise SchemaError(f"header column {len(schema.field_names) + 1}: "
                          f"unexpected extra column {found[len(schema.field_names)]!r}")


def read_records(source: Source, schema: CsvSchema,
                 validate: Callable[[object], list[str]]) -> tuple[list, list[Diagnostic]]:
    """Parse every data row; malformed rows become diagnostics and are skipped."""
    lines = _read_text(source).split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    _check_header(lines[0] if lines else None, schema)
    width = len(schema.field_names)
    parsers = schema.parsers
    names = schema.field_names
    attrs = schema.attributes
    make = schema.record_type
    records, diagnostics = [], []
    seen: set[int] = set()
    for number, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != width:
            diagnostics.append(Diagnostic(number, f"field count {len(cells)} ≠ {width}"))
            continue
        values = {}
        for name, attr, parse, cell in zip(names, attrs, parsers, cells):
            try:
                values[attr] = parse(cell)
            except (ValueError, OverflowError):
                diagnostics.append(Diagnostic(number, f"{name}: cannot parse {cell!r}"))
                break
        else:
            record = make(**values)
            problems = validate(record)
            key = record_key(record)
            if key in seen:
                problems.append(f"duplicate {names[0]} {key}")
            if problems:
                diagnostics.append(Diagnostic(number, "; ".join(problems)))
                continue
            seen.add(key)
            records.append(record)
    return records, diagnostics


def record_key(record) -> int:
    return record.detail_id if isinstance(record, PageviewRecord) else record.session_id


def write_records(records: Iterable, destination: Source, schema: CsvSchema) -> int:
    formatters = schema.formatters
    attrs = schema.attributes
    out = [",".join(schema.field_names)]
    for r in records:
        out.append(",".join(fmt(getattr(r, a)) for fmt, a in zip(formatters, attrs)))
    text = "\n".join(out) + "\n"
    if hasattr(destination, "write"):
        destination.write(text if not isinstance(destination, io.BufferedIOBase)
                          else text.encode("utf-8"))
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return len(out) - 1


def read_pageviews(source: Source, schema: CsvSchema = PAGEVIEW_SCHEMA,
                   domains: Domains = DEFAULT_DOMAINS):
    """Return ``(records, diagnostics)`` from a pageview CSV."""
    return read_records(source, schema, lambda r: validate_pageview(r, domains))


def write_pageviews(records: Iterable[PageviewRecord], destination: Source,
                    schema: CsvSchema = PAGEVIEW_SCHEMA) -> int:
    return write_records(records, destination, schema)


def read_sessions(source: Source, schema: CsvSchema = SESSION_SCHEMA):
    return read_records(source, schema, validate_session)


def write_sessions(records: Iterable[SessionRecord], destination: Source,
                   schema: CsvSchema = SESSION_SCHEMA) -> int:
    return write_records(records, destination, schema)


# ---- two-column side tables ---------------------------------------------

def write_pairs(pairs: Iterable[tuple[int, int]], destination: Source,
                header: Sequence[str]) -> int:
    lines = [",".join(header)] + [f"{a},{b}" for a, b in pairs]
    with open(destination, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(lines) - 1


def read_pairs(source: Source, header: Sequence[str]) -> dict[int, int]:
    lines = [ln.rstrip("\r") for ln in _read_text(source).split("\n") if ln.strip()]
    if not lines or [c.strip() for c in lines[0].split(",")] != list(header):
        raise SchemaError(f"expected header {','.join(header)!r}")
    out = {}
    for number, line in enumerate(lines[1:], start=2):
        try:
            a, b = line.split(",")
            out[int(a)] = int(b)
        except ValueError as exc:
            raise SchemaError(f"line {number}: malformed pair {line!r}") from exc
    return out


EXIT_EVENTS_HEADER = ("Session_ID", "Exit_Method")
GROUND_TRUTH_HEADER = ("Detail_ID", "Anomaly_Flag")


def read_exit_events(source: Source) -> dict[int, int]:
    return read_pairs(source, EXIT_EVENTS_HEADER)


def read_ground_truth(source: Source) -> dict[int, int]:
    return read_pairs(source, GROUND_TRUTH_HEADER)
