from datetime import datetime

import pytest
from hypothesis import given, settings, strategies as st

from evbehave.errors import InvalidSession, MalformedRow, SessionParseError
from evbehave.sessions import (ChargingSession, SessionDataset, parse_sessions, serialize_sessions,
                               sessions_by_user)

HEADER = "user_id,arrival,departure,energy_kwh\n"


def test_single_row():
    ds = parse_sessions(HEADER + "u1,2017-03-01T08:00,2017-03-01T17:30,12.5\n")
    assert len(ds) == 1
    s = ds.sessions[0]
    assert s.user_id == "u1"
    assert s.duration_h == 9.5
    assert s.energy_kwh == 12.5
    assert s.arrival_hour == 8.0 and s.departure_hour == 17.5


def test_departure_equal_arrival_is_invalid():
    text = HEADER + "u1,2017-03-01T08:00,2017-03-01T08:00,1.0\n"
    with pytest.raises(SessionParseError) as info:
        parse_sessions(text)
    (err,) = info.value.errors
    assert isinstance(err, InvalidSession)
    assert err.line_no == 2


def test_user_index():
    rows = [
        "u1,2017-03-01T08:00,2017-03-01T10:00,1",
        "u1,2017-03-02T08:00,2017-03-02T10:00,2",
        "u1,2017-03-03T08:00,2017-03-03T10:00,3",
        "u2,2017-03-01T09:00,2017-03-01T10:00,4",
        "u2,2017-03-02T09:00,2017-03-02T10:00,5",
    ]
    ds = parse_sessions(HEADER + "\n".join(rows) + "\n")
    assert ds.user_index == {"u1": (0, 1, 2), "u2": (3, 4)}
    assert [s.energy_kwh for s in sessions_by_user(ds, "u2")] == [4.0, 5.0]
    assert sessions_by_user(ds, "nobody") == []


def test_malformed_and_invalid_rows_collected():
    text = HEADER + "\n".join([
        "u1,2017-03-01T08:00,2017-03-01T10:00,1",
        "u1,not-a-date,2017-03-01T10:00,1",
        "u1,2017-03-01T08:00,2017-03-01T10:00,abc",
        "u1,2017-03-01T08:00,2017-03-01T10:00,-1",
        "u1,2017-03-01T08:00,2017-03-01T10:00",
        "u2,2017-03-01T23:00,2017-03-02T07:00,9",
    ]) + "\n"
    with pytest.raises(SessionParseError) as info:
        parse_sessions(text, strict=True)
    errs = info.value.errors
    assert [e.line_no for e in errs] == [3, 4, 5, 6]
    assert [type(e) for e in errs] == [MalformedRow, MalformedRow, InvalidSession, MalformedRow]

    ds = parse_sessions(text, strict=False)
    assert len(ds) == 2 and len(ds.rejected) == 4
    overnight = ds.sessions[1]
    assert overnight.duration_h == 8.0
    assert overnight.departure_hour == 7.0
    assert overnight.departure_rel_hour == 31.0


def test_optional_charge_columns():
    header = "user_id,arrival,departure,energy_kwh,charge_start,charge_end\n"
    ds = parse_sessions(header + "u1,2017-03-01T08:00,2017-03-01T17:00,5,2017-03-01T08:05,2017-03-01T09:00\n"
                        + "u1,2017-03-02T08:00,2017-03-02T17:00,5,,\n")
    assert ds.sessions[0].charge_start == datetime(2017, 3, 1, 8, 5)
    assert ds.sessions[1].charge_start is None
    with pytest.raises(SessionParseError):
        parse_sessions(header + "u1,2017-03-01T08:00,2017-03-01T17:00,5,2017-03-01T07:00,2017-03-01T09:00\n")
    assert parse_sessions(serialize_sessions(ds)) == ds


def test_bad_header():
    with pytest.raises(MalformedRow):
        parse_sessions("user,arrival,departure,energy\n")


def test_session_invariants_enforced_on_construction():
    with pytest.raises(InvalidSession):
        ChargingSession("u", datetime(2017, 1, 1, 9), datetime(2017, 1, 1, 8), 1.0)


minutes = st.integers(min_value=0, max_value=60 * 24 * 30)


@st.composite
def session_rows(draw):
    n = draw(st.integers(1, 15))
    rows = []
    for _ in range(n):
        user = draw(st.sampled_from(["a", "b", "c", "E63CB444"]))
        start = draw(minutes)
        stay = draw(st.integers(-30, 2000))
        energy = draw(st.one_of(st.floats(-5, 80, allow_nan=False), st.just(0.0)))
        t0 = datetime(2017, 1, 1).timestamp() + 60 * start
        a = datetime.fromtimestamp(t0).strftime("%Y-%m-%dT%H:%M")
        d = datetime.fromtimestamp(t0 + 60 * stay).strftime("%Y-%m-%dT%H:%M")
        rows.append(f"{user},{a},{d},{energy!r}")
    return HEADER + "\n".join(rows) + "\n"


@settings(max_examples=100, deadline=None)
@given(session_rows())
def test_lenient_parse_properties(text):
    ds = parse_sessions(text, strict=False)
    for s in ds.sessions:
        assert s.departure > s.arrival and s.energy_kwh >= 0
    assert len(ds.sessions) == sum(len(sessions_by_user(ds, u)) for u in ds.user_index)
    covered = sorted(i for ix in ds.user_index.values() for i in ix)
    assert covered == list(range(len(ds)))
    # round trip
    assert parse_sessions(serialize_sessions(ds)) == ds
    assert len(ds.sessions) + len(ds.rejected) == text.count("\n") - 1


def test_subset_and_user_order():
    ds = SessionDataset((
        ChargingSession("b", datetime(2017, 1, 1, 8), datetime(2017, 1, 1, 9), 1.0),
        ChargingSession("a", datetime(2017, 1, 1, 8), datetime(2017, 1, 1, 9), 1.0),
        ChargingSession("b", datetime(2017, 1, 2, 8), datetime(2017, 1, 2, 9), 1.0),
    ))
    assert ds.user_ids == ["b", "a"]
    assert ds.subset(["b"]).user_index == {"b": (0, 1)}
