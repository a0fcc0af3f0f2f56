import io
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sample_pageview
from wumkit import ingest
from wumkit.core import PageviewRecord, SchemaError
from wumkit.ingest import (PAGEVIEW_SCHEMA, SESSION_SCHEMA, read_pageviews, read_sessions,
                           write_pageviews, write_sessions)

SAMPLE_LINE = "89010871,83665107,11.20.2022 13:01,184922,1,1,6,2,18,1,1,1,1,6,4,3,41,0.122"


def pageview_csv(*rows: str) -> io.StringIO:
    return io.StringIO("\n".join([",".join(PAGEVIEW_SCHEMA.field_names), *rows]) + "\n")


def test_headers():
    assert PAGEVIEW_SCHEMA.field_names[:4] == ("Detail_ID", "Session_ID", "Detail_Date_Time",
                                               "User_ID")
    assert "User_Language_TR" in PAGEVIEW_SCHEMA.field_names
    assert len(PAGEVIEW_SCHEMA.field_names) == 18
    assert SESSION_SCHEMA.field_names[0] == "Session_ID"
    assert SESSION_SCHEMA.field_names[-4:] == ("Referer_Type", "Exit_Method", "Log_Date_Time",
                                               "Log_Date")
    assert "p_obis" in SESSION_SCHEMA.field_names


def test_sample_row_parses():
    records, diagnostics = read_pageviews(pageview_csv(SAMPLE_LINE))
    assert diagnostics == []
    assert records == [sample_pageview()]


def test_header_only_and_short_rows():
    assert read_pageviews(pageview_csv()) == ([], [])
    records, diagnostics = read_pageviews(pageview_csv(SAMPLE_LINE.rsplit(",", 1)[0]))
    assert records == []
    assert [(d.row, d.reason) for d in diagnostics] == [(2, "field count 17 ≠ 18")]


def test_bad_rows_are_reported_and_skipped():
    bad_number = SAMPLE_LINE.replace(",41,", ",forty,")
    negative = SAMPLE_LINE.replace("89010871", "5").replace(",41,", ",-1,")
    records, diagnostics = read_pageviews(pageview_csv(SAMPLE_LINE, bad_number, SAMPLE_LINE,
                                                       negative))
    assert len(records) == 1
    reasons = {d.row: d.reason for d in diagnostics}
    assert reasons[3] == "Page_Duration: cannot parse 'forty'"
    assert reasons[4] == "duplicate Detail_ID 89010871"
    assert reasons[5] == "page_duration ≥ 0"


def test_wrong_header_is_fatal():
    text = SAMPLE_LINE.replace("89010871", "x")
    with pytest.raises(SchemaError, match="header column 1"):
        read_pageviews(io.StringIO("Detail_Id" + ",".join(PAGEVIEW_SCHEMA.field_names)[9:]
                                   + "\n" + text))
    with pytest.raises(SchemaError, match="missing header"):
        read_pageviews(io.StringIO(""))


def test_formatting_rules():
    t = int(datetime(2022, 11, 20, 13, 1, tzinfo=timezone.utc).timestamp())
    assert PAGEVIEW_SCHEMA.formatters[2](t) == "11.20.2022 13:01"
    assert PAGEVIEW_SCHEMA.formatters[2](t + 7) == "11.20.2022 13:01:07"
    assert PAGEVIEW_SCHEMA.formatters[-1](0.5) == "0.500"
    iso = ingest.pageview_schema("iso8601")
    assert iso.formatters[2](t) == "2022-11-20T13:01:00Z"
    assert iso.parsers[2]("2022-11-20T13:01:00Z") == t


def test_one_record_writes_two_lines():
    buf = io.StringIO()
    assert write_pageviews([sample_pageview()], buf) == 1
    lines = buf.getvalue().split("\n")
    assert lines[1] == SAMPLE_LINE and lines[2] == "" and len(lines) == 3


def test_binary_stream_and_crlf_input():
    raw = io.BytesIO()
    write_pageviews([sample_pageview()], raw)
    crlf = raw.getvalue().replace(b"\n", b"\r\n")
    records, diagnostics = read_pageviews(io.BytesIO(crlf))
    assert records == [sample_pageview()] and diagnostics == []


def test_session_identity_check(small_sim):
    sessions = small_sim[2][:5]
    buf = io.StringIO()
    write_sessions(sessions, buf)
    text = buf.getvalue().split("\n")
    cells = text[1].split(",")
    p_gate = SESSION_SCHEMA.field_names.index("p_gate")
    cells[p_gate] = str(int(cells[p_gate]) + 1)
    text[1] = ",".join(cells)
    records, diagnostics = read_sessions(io.StringIO("\n".join(text)))
    assert records == sessions[1:]
    assert "p_* sum mismatch" in diagnostics[0].reason


def test_pairs_round_trip(tmp_path):
    path = tmp_path / "events.csv"
    ingest.write_pairs([(3, 1), (9, 2)], path, ingest.EXIT_EVENTS_HEADER)
    assert ingest.read_exit_events(path) == {3: 1, 9: 2}
    with pytest.raises(SchemaError):
        ingest.read_ground_truth(path)


pageview_values = st.builds(
    PageviewRecord,
    detail_id=st.integers(1, 2**62), session_id=st.integers(1, 2**62),
    detail_date_time=st.integers(0, 4102444799), user_id=st.integers(0, 10**9),
    current_login_status=st.integers(0, 1), session_login_status=st.integers(0, 1),
    user_type=st.integers(0, 9), sex=st.integers(0, 2), age=st.integers(0, 120),
    age_group=st.integers(0, 5), user_language_tr=st.integers(0, 1),
    user_location=st.integers(0, 9), browser_type=st.integers(0, 9),
    referer_type=st.integers(0, 9), server_id=st.integers(1, 10), service_id=st.integers(1, 6),
    page_duration=st.integers(0, 10**7),
    page_load_time=st.integers(0, 10**9).map(lambda m: m / 1000))


@settings(max_examples=200, deadline=None)
@given(st.lists(pageview_values, max_size=20, unique_by=lambda r: r.detail_id),
       st.sampled_from(ingest.TIMESTAMP_FORMATS))
def test_pageview_round_trip(records, fmt):
    schema = ingest.pageview_schema(fmt)
    buf = io.StringIO()
    write_pageviews(records, buf, schema)
    assert read_pageviews(io.StringIO(buf.getvalue()), schema) == (records, [])
