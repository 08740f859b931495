"""Parse, validate and index the six raw input streams.

Input is six CSV files (calls, sms, bluetooth, weather, personality, stress)
with fixed headers.  Parsing is strict: a malformed row fails with its file
and line number rather than being silently dropped.  Identical duplicate
rows are removed and counted; duplicates that share a key but disagree on
payload are treated as corrupt input and rejected.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

CALL_DIRECTIONS = ("incoming", "outgoing", "missed")
SMS_DIRECTIONS = ("incoming", "outgoing")

CSV_HEADERS = {
    "calls": ["subject_id", "timestamp", "direction", "peer_id", "duration"],
    "sms": ["subject_id", "timestamp", "direction", "peer_id"],
    "bluetooth": ["subject_id", "timestamp", "seen_id", "rssi"],
    "weather": [
        "date",
        "mean_temperature",
        "pressure",
        "precipitation",
        "humidity",
        "visibility",
        "wind_speed",
    ],
    "personality": [
        "subject_id",
        "extraversion",
        "neuroticism",
        "agreeableness",
        "conscientiousness",
        "openness",
    ],
    "stress": ["subject_id", "date", "score"],
}


class ParseError(ValueError):
    """Malformed input row; carries the offending file and line number."""

    def __init__(self, path: str | Path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path} line {line}: {message}")


@dataclass(frozen=True)
class CallRecord:
    subject_id: str
    timestamp: int
    direction: str
    peer_id: str
    duration: int


@dataclass(frozen=True)
class SmsRecord:
    subject_id: str
    timestamp: int
    direction: str
    peer_id: str


@dataclass(frozen=True)
class BluetoothScan:
    subject_id: str
    timestamp: int
    seen_id: str
    rssi: int


@dataclass(frozen=True)
class WeatherDay:
    date: dt.date
    mean_temperature: float
    pressure: float
    precipitation: float
    humidity: float
    visibility: float
    wind_speed: float


@dataclass(frozen=True)
class PersonalityProfile:
    subject_id: str
    extraversion: float
    neuroticism: float
    agreeableness: float
    conscientiousness: float
    openness: float

    def traits(self) -> dict[str, float]:
        return {
            "Extraversion": self.extraversion,
            "Neuroticism": self.neuroticism,
            "Agreeableness": self.agreeableness,
            "Conscientiousness": self.conscientiousness,
            "Openness": self.openness,
        }


@dataclass(frozen=True)
class StressReport:
    subject_id: str
    date: dt.date
    score: int


@dataclass(frozen=True)
class SubjectDataset:
    """Immutable per-subject index over all record streams.

    ``window`` is the inclusive [first, last] calendar span observed in the
    data (study timezone), or ``None`` for a fully empty dataset.
    """

    subjects: tuple[str, ...]
    calls: Mapping[str, tuple[CallRecord, ...]]
    sms: Mapping[str, tuple[SmsRecord, ...]]
    bluetooth: Mapping[str, tuple[BluetoothScan, ...]]
    personality: Mapping[str, PersonalityProfile]
    stress: Mapping[str, tuple[StressReport, ...]]
    weather: Mapping[dt.date, WeatherDay]
    window: tuple[dt.date, dt.date] | None
    timezone: dt.tzinfo = dt.timezone.utc


@dataclass
class StreamCounts:
    rows_read: int = 0
    rows_stored: int = 0

    @property
    def duplicates_dropped(self) -> int:
        return self.rows_read - self.rows_stored


@dataclass
class IngestReport:
    """Row accounting per stream; read == stored + dropped always holds."""

    streams: dict[str, StreamCounts] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            name: {
                "rows_read": c.rows_read,
                "rows_stored": c.rows_stored,
                "duplicates_dropped": c.duplicates_dropped,
            }
            for name, c in sorted(self.streams.items())
        }


@dataclass(frozen=True)
class StreamPaths:
    calls: Path
    sms: Path
    bluetooth: Path
    weather: Path
    personality: Path
    stress: Path

    @classmethod
    def in_dir(cls, directory: str | Path) -> "StreamPaths":
        d = Path(directory)
        return cls(*(d / f"{f.name}.csv" for f in fields(cls)))


def _read_rows(path: Path, stream: str) -> Iterable[tuple[int, dict[str, str]]]:
    expected = CSV_HEADERS[stream]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(path, 1, "missing header row")
        if sorted(reader.fieldnames) != sorted(expected):
            raise ParseError(
                path, 1, f"header {reader.fieldnames} does not match expected {expected}"
            )
        for row in reader:
            if None in row or None in row.values():
                raise ParseError(path, reader.line_num, "wrong number of fields")
            yield reader.line_num, row


def _to_int(raw: str, path: Path, line: int, name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(path, line, f"field {name!r} is not an integer: {raw!r}") from None


def _to_float(raw: str, path: Path, line: int, name: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(path, line, f"field {name!r} is not a number: {raw!r}") from None


def _to_date(raw: str, path: Path, line: int, name: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise ParseError(path, line, f"field {name!r} is not an ISO date: {raw!r}") from None


def _parse_calls(path: Path, counts: StreamCounts) -> list[CallRecord]:
    seen: set[CallRecord] = set()
    out: list[CallRecord] = []
    for line, row in _read_rows(path, "calls"):
        counts.rows_read += 1
        direction = row["direction"]
        if direction not in CALL_DIRECTIONS:
            raise ParseError(path, line, f"unknown call direction {direction!r}")
        duration = _to_int(row["duration"], path, line, "duration")
        if duration < 0:
            raise ParseError(path, line, f"negative duration {duration}")
        if direction == "missed" and duration != 0:
            raise ParseError(path, line, f"missed call with nonzero duration {duration}")
        rec = CallRecord(
            subject_id=row["subject_id"],
            timestamp=_to_int(row["timestamp"], path, line, "timestamp"),
            direction=direction,
            peer_id=row["peer_id"],
            duration=duration,
        )
        if rec in seen:
            continue
        seen.add(rec)
        out.append(rec)
        counts.rows_stored += 1
    return out


def _parse_sms(path: Path, counts: StreamCounts) -> list[SmsRecord]:
    seen: set[SmsRecord] = set()
    out: list[SmsRecord] = []
    for line, row in _read_rows(path, "sms"):
        counts.rows_read += 1
        direction = row["direction"]
        if direction not in SMS_DIRECTIONS:
            raise ParseError(path, line, f"unknown sms direction {direction!r}")
        rec = SmsRecord(
            subject_id=row["subject_id"],
            timestamp=_to_int(row["timestamp"], path, line, "timestamp"),
            direction=direction,
            peer_id=row["peer_id"],
        )
        if rec in seen:
            continue
        seen.add(rec)
        out.append(rec)
        counts.rows_stored += 1
    return out


def _parse_bluetooth(path: Path, counts: StreamCounts) -> list[BluetoothScan]:
    seen: set[BluetoothScan] = set()
    out: list[BluetoothScan] = []
    for line, row in _read_rows(path, "bluetooth"):
        counts.rows_read += 1
        rec = BluetoothScan(
            subject_id=row["subject_id"],
            timestamp=_to_int(row["timestamp"], path, line, "timestamp"),
            seen_id=row["seen_id"],
            rssi=_to_int(row["rssi"], path, line, "rssi"),
        )
        if rec in seen:
            continue
        seen.add(rec)
        out.append(rec)
        counts.rows_stored += 1
    return out


def _parse_weather(path: Path, counts: StreamCounts) -> dict[dt.date, WeatherDay]:
    out: dict[dt.date, WeatherDay] = {}
    for line, row in _read_rows(path, "weather"):
        counts.rows_read += 1
        day = _to_date(row["date"], path, line, "date")
        rec = WeatherDay(
            date=day,
            mean_temperature=_to_float(row["mean_temperature"], path, line, "mean_temperature"),
            pressure=_to_float(row["pressure"], path, line, "pressure"),
            precipitation=_to_float(row["precipitation"], path, line, "precipitation"),
            humidity=_to_float(row["humidity"], path, line, "humidity"),
            visibility=_to_float(row["visibility"], path, line, "visibility"),
            wind_speed=_to_float(row["wind_speed"], path, line, "wind_speed"),
        )
        if not 0.0 <= rec.humidity <= 100.0:
            raise ParseError(path, line, f"humidity {rec.humidity} outside [0, 100]")
        if rec.precipitation < 0:
            raise ParseError(path, line, f"negative precipitation {rec.precipitation}")
        if rec.wind_speed < 0:
            raise ParseError(path, line, f"negative wind speed {rec.wind_speed}")
        if day in out:
            if out[day] == rec:
                continue
            raise ParseError(path, line, f"conflicting weather rows for {day.isoformat()}")
        out[day] = rec
        counts.rows_stored += 1
    return out


def _parse_personality(path: Path, counts: StreamCounts) -> dict[str, PersonalityProfile]:
    out: dict[str, PersonalityProfile] = {}
    for line, row in _read_rows(path, "personality"):
        counts.rows_read += 1
        values = {
            name: _to_float(row[name], path, line, name)
            for name in CSV_HEADERS["personality"][1:]
        }
        for name, value in values.items():
            if not 1.0 <= value <= 5.0:
                raise ParseError(path, line, f"trait {name} = {value} outside [1, 5]")
        rec = PersonalityProfile(subject_id=row["subject_id"], **values)
        if rec.subject_id in out:
            if out[rec.subject_id] == rec:
                continue
            raise ParseError(path, line, f"conflicting traits for subject {rec.subject_id!r}")
        out[rec.subject_id] = rec
        counts.rows_stored += 1
    return out


def _parse_stress(path: Path, counts: StreamCounts) -> list[StressReport]:
    out: dict[tuple[str, dt.date], StressReport] = {}
    for line, row in _read_rows(path, "stress"):
        counts.rows_read += 1
        score = _to_int(row["score"], path, line, "score")
        if not 1 <= score <= 7:
            raise ParseError(path, line, f"stress score {score} outside 1..7")
        rec = StressReport(
            subject_id=row["subject_id"],
            date=_to_date(row["date"], path, line, "date"),
            score=score,
        )
        key = (rec.subject_id, rec.date)
        if key in out:
            if out[key] == rec:
                continue
            raise ParseError(
                path, line, f"duplicate stress report for {rec.subject_id!r} on {rec.date}"
            )
        out[key] = rec
        counts.rows_stored += 1
    return list(out.values())


def _by_subject(records, key=lambda r: r.timestamp):
    grouped: dict[str, list] = {}
    for rec in records:
        grouped.setdefault(rec.subject_id, []).append(rec)
    return {sid: tuple(sorted(rs, key=key)) for sid, rs in grouped.items()}


def day_of(timestamp: int, tz: dt.tzinfo = dt.timezone.utc) -> dt.date:
    """Calendar day of a UTC-seconds timestamp under the study timezone."""
    return dt.datetime.fromtimestamp(timestamp, tz).date()


def parse_logs(
    paths: StreamPaths, timezone: dt.tzinfo = dt.timezone.utc
) -> tuple[SubjectDataset, IngestReport]:
    """Parse all six streams into an indexed dataset plus row accounting."""
    report = IngestReport({name: StreamCounts() for name in CSV_HEADERS})
    for f in fields(StreamPaths):
        path = getattr(paths, f.name)
        if not Path(path).exists():
            raise FileNotFoundError(f"missing input file for stream {f.name!r}: {path}")

    calls = _parse_calls(Path(paths.calls), report.streams["calls"])
    sms = _parse_sms(Path(paths.sms), report.streams["sms"])
    bluetooth = _parse_bluetooth(Path(paths.bluetooth), report.streams["bluetooth"])
    weather = _parse_weather(Path(paths.weather), report.streams["weather"])
    personality = _parse_personality(Path(paths.personality), report.streams["personality"])
    stress = _parse_stress(Path(paths.stress), report.streams["stress"])

    subjects = sorted(
        {r.subject_id for r in calls}
        | {r.subject_id for r in sms}
        | {r.subject_id for r in bluetooth}
        | set(personality)
        | {r.subject_id for r in stress}
    )

    dates = set(weather) | {r.date for r in stress}
    for stream in (calls, sms, bluetooth):
        dates.update(day_of(r.timestamp, timezone) for r in stream)
    window = (min(dates), max(dates)) if dates else None

    dataset = SubjectDataset(
        subjects=tuple(subjects),
        calls=_by_subject(calls),
        sms=_by_subject(sms),
        bluetooth=_by_subject(bluetooth),
        personality=personality,
        stress=_by_subject(stress, key=lambda r: r.date),
        weather=weather,
        window=window,
        timezone=timezone,
    )
    return dataset, report


def filter_bluetooth(scans: Iterable[BluetoothScan]) -> list[BluetoothScan]:
    """Apply the signal-strength retention rule (keep rssi >= 0), preserving order."""
    return [s for s in scans if s.rssi >= 0]


def longest_consecutive_run(dates: Iterable[dt.date]) -> int:
    """Length of the longest run of consecutive calendar days."""
    ordered = sorted(set(dates))
    best = run = 1 if ordered else 0
    for prev, cur in zip(ordered, ordered[1:]):
        run = run + 1 if (cur - prev).days == 1 else 1
        best = max(best, run)
    return best


def validate_coverage(dataset: SubjectDataset, min_consecutive_days: int = 14) -> list[str]:
    """Subjects with at least ``min_consecutive_days`` consecutive days of stress reports."""
    if min_consecutive_days < 1:
        raise ValueError("min_consecutive_days must be >= 1")
    retained = [
        sid
        for sid in dataset.subjects
        if longest_consecutive_run(r.date for r in dataset.stress.get(sid, ()))
        >= min_consecutive_days
    ]
    if not retained:
        raise ValueError("no eligible subjects")
    return retained
