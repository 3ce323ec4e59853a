"""Charging-session records: parsing, validation, per-user indexing, CSV export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

from .errors import EvBehaveError, InvalidSession, MalformedRow, SessionParseError

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"
BASE_COLUMNS = ("user_id", "arrival", "departure", "energy_kwh")
OPTIONAL_COLUMNS = ("charge_start", "charge_end")


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text.strip(), TIMESTAMP_FORMAT)


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def _hour_of_day(ts: datetime) -> float:
    return ts.hour + ts.minute / 60.0


@dataclass(frozen=True)
class ChargingSession:
    """One plug-in event. ``arrival``/``departure`` are plug-in/plug-out times."""

    user_id: str
    arrival: datetime
    departure: datetime
    energy_kwh: float
    charge_start: datetime | None = None
    charge_end: datetime | None = None

    def __post_init__(self):
        problem = self.violation()
        if problem:
            raise InvalidSession(0, problem)

    def violation(self) -> str | None:
        if not self.departure > self.arrival:
            return "departure must be strictly after arrival"
        if not (self.energy_kwh >= 0 and math.isfinite(self.energy_kwh)):
            return "energy_kwh must be a finite non-negative number"
        if (self.charge_start is None) != (self.charge_end is None):
            return "charge_start and charge_end must be given together"
        if self.charge_start is not None:
            if not (self.arrival <= self.charge_start <= self.charge_end <= self.departure):
                return "need arrival <= charge_start <= charge_end <= departure"
        return None

    @property
    def duration_h(self) -> float:
        return (self.departure - self.arrival).total_seconds() / 3600.0

    @property
    def arrival_hour(self) -> float:
        """Plug-in time of day in decimal hours, in [0, 24)."""
        return _hour_of_day(self.arrival)

    @property
    def departure_hour(self) -> float:
        """Plug-out time of day in decimal hours, in [0, 24) (overnight wraps)."""
        return _hour_of_day(self.departure)

    @property
    def departure_rel_hour(self) -> float:
        """Plug-out measured from midnight of the arrival day; may exceed 24."""
        return self.arrival_hour + self.duration_h


@dataclass(frozen=True)
class SessionDataset:
    sessions: tuple[ChargingSession, ...]
    user_index: dict[str, tuple[int, ...]] = field(init=False, compare=False)
    rejected: tuple[EvBehaveError, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        index: dict[str, list[int]] = {}
        for i, s in enumerate(self.sessions):
            index.setdefault(s.user_id, []).append(i)
        object.__setattr__(self, "user_index", {u: tuple(ix) for u, ix in index.items()})

    @property
    def user_ids(self) -> list[str]:
        """Users in first-appearance order."""
        return list(self.user_index)

    def __len__(self):
        return len(self.sessions)

    def subset(self, user_ids: Iterable[str]) -> "SessionDataset":
        keep = set(user_ids)
        return SessionDataset(tuple(s for s in self.sessions if s.user_id in keep))


def sessions_by_user(ds: SessionDataset, user_id: str) -> list[ChargingSession]:
    return [ds.sessions[i] for i in ds.user_index.get(user_id, ())]


def _parse_row(row: Sequence[str], line_no: int, n_cols: int) -> ChargingSession:
    if len(row) != n_cols:
        raise MalformedRow(line_no, f"expected {n_cols} fields, got {len(row)}")
    user_id = row[0].strip()
    if not user_id:
        raise MalformedRow(line_no, "empty user_id")
    try:
        arrival = parse_timestamp(row[1])
        departure = parse_timestamp(row[2])
        energy = float(row[3])
        charge_start = charge_end = None
        if n_cols == 6:
            charge_start = parse_timestamp(row[4]) if row[4].strip() else None
            charge_end = parse_timestamp(row[5]) if row[5].strip() else None
    except ValueError as exc:
        raise MalformedRow(line_no, str(exc)) from None
    if not math.isfinite(energy):
        raise MalformedRow(line_no, f"non-finite energy {row[3]!r}")
    try:
        return ChargingSession(user_id, arrival, departure, energy, charge_start, charge_end)
    except InvalidSession as exc:
        raise InvalidSession(line_no, exc.reason) from None


def parse_sessions(csv_text: str, strict: bool = True) -> SessionDataset:
    """Parse session CSV text.

    Every bad row is collected. In strict mode any bad row raises
    :class:`SessionParseError`; in lenient mode bad rows are skipped and
    listed on ``dataset.rejected``.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedRow(1, "missing header") from None
    if header == list(BASE_COLUMNS):
        n_cols = 4
    elif header == list(BASE_COLUMNS + OPTIONAL_COLUMNS):
        n_cols = 6
    else:
        raise MalformedRow(1, f"unexpected header {','.join(header)!r}")

    sessions: list[ChargingSession] = []
    errors: list[EvBehaveError] = []
    for row in reader:
        line_no = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            sessions.append(_parse_row(row, line_no, n_cols))
        except (MalformedRow, InvalidSession) as exc:
            errors.append(exc)
    if errors and strict:
        raise SessionParseError(errors)
    return SessionDataset(tuple(sessions), rejected=tuple(errors))


def serialize_sessions(ds: SessionDataset) -> str:
    with_charge = any(s.charge_start is not None for s in ds.sessions)
    columns = BASE_COLUMNS + (OPTIONAL_COLUMNS if with_charge else ())
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for s in ds.sessions:
        row = [s.user_id, format_timestamp(s.arrival), format_timestamp(s.departure), repr(float(s.energy_kwh))]
        if with_charge:
            row += [format_timestamp(s.charge_start) if s.charge_start else "",
                    format_timestamp(s.charge_end) if s.charge_end else ""]
        writer.writerow(row)
    return out.getvalue()


def load_sessions(path, strict: bool = True) -> SessionDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_sessions(fh.read(), strict=strict)
