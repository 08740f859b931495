from __future__ import annotations

import datetime as dt
from pathlib import Path

import numpy as np
import pytest

from stresslens import synth
from stresslens.ingest import (
    BluetoothScan,
    ParseError,
    StreamPaths,
    StressReport,
    SubjectDataset,
    filter_bluetooth,
    longest_consecutive_run,
    parse_logs,
    validate_coverage,
)

HEADERS = {
    "calls": "subject_id,timestamp,direction,peer_id,duration",
    "sms": "subject_id,timestamp,direction,peer_id",
    "bluetooth": "subject_id,timestamp,seen_id,rssi",
    "weather": "date,mean_temperature,pressure,precipitation,humidity,visibility,wind_speed",
    "personality": "subject_id,extraversion,neuroticism,agreeableness,conscientiousness,openness",
    "stress": "subject_id,date,score",
}


def write_streams(directory: Path, **overrides: list[str]) -> StreamPaths:
    defaults: dict[str, list[str]] = {name: [] for name in HEADERS}
    defaults.update(overrides)
    for name, rows in defaults.items():
        (directory / f"{name}.csv").write_text(
            "\n".join([HEADERS[name]] + rows) + "\n", encoding="utf-8"
        )
    return StreamPaths.in_dir(directory)


def test_parses_well_formed_call_rows(tmp_path):
    paths = write_streams(
        tmp_path,
        calls=[
            "s1,1000,incoming,p1,60",
            "s1,2000,outgoing,p2,30",
            "s2,3000,missed,p1,0",
        ],
    )
    dataset, report = parse_logs(paths)
    assert sum(len(v) for v in dataset.calls.values()) == 3
    assert report.streams["calls"].rows_read == 3
    assert report.streams["calls"].rows_stored == 3
    assert dataset.subjects == ("s1", "s2")


def test_unknown_direction_names_line(tmp_path):
    paths = write_streams(tmp_path, calls=["s1,1000,incoming,p1,60", "s1,2000,inbound,p2,30"])
    with pytest.raises(ParseError, match=r"line 3.*inbound"):
        parse_logs(paths)


def test_missed_call_with_duration_rejected(tmp_path):
    paths = write_streams(tmp_path, calls=["s1,1000,missed,p1,5"])
    with pytest.raises(ParseError, match="missed call"):
        parse_logs(paths)


def test_negative_duration_rejected(tmp_path):
    paths = write_streams(tmp_path, calls=["s1,1000,incoming,p1,-2"])
    with pytest.raises(ParseError, match="negative duration"):
        parse_logs(paths)


def test_header_mismatch_rejected(tmp_path):
    paths = write_streams(tmp_path)
    (tmp_path / "calls.csv").write_text("subject,when,dir,peer,dur\n", encoding="utf-8")
    with pytest.raises(ParseError, match="header"):
        parse_logs(paths)


def test_missing_file_reported(tmp_path):
    paths = write_streams(tmp_path)
    (tmp_path / "sms.csv").unlink()
    with pytest.raises(FileNotFoundError, match="sms"):
        parse_logs(paths)


def test_identical_duplicates_dropped_and_counted(tmp_path):
    paths = write_streams(
        tmp_path,
        calls=["s1,1000,incoming,p1,60"] * 3,
        stress=["s1,2020-01-01,3"] * 2,
    )
    dataset, report = parse_logs(paths)
    assert report.streams["calls"].rows_read == 3
    assert report.streams["calls"].rows_stored == 1
    assert report.streams["calls"].duplicates_dropped == 2
    assert len(dataset.stress["s1"]) == 1
    for counts in report.streams.values():
        assert counts.rows_read == counts.rows_stored + counts.duplicates_dropped


def test_conflicting_stress_report_rejected(tmp_path):
    paths = write_streams(tmp_path, stress=["s1,2020-01-01,3", "s1,2020-01-01,5"])
    with pytest.raises(ParseError, match="duplicate stress report"):
        parse_logs(paths)


def test_conflicting_weather_rejected(tmp_path):
    paths = write_streams(
        tmp_path,
        weather=["2020-01-01,5.0,1010.0,0.0,60.0,10.0,3.0", "2020-01-01,6.0,1010.0,0.0,60.0,10.0,3.0"],
    )
    with pytest.raises(ParseError, match="conflicting weather"):
        parse_logs(paths)


def test_out_of_range_values_rejected(tmp_path):
    paths = write_streams(tmp_path, stress=["s1,2020-01-01,9"])
    with pytest.raises(ParseError, match="score"):
        parse_logs(paths)
    paths = write_streams(tmp_path, personality=["s1,3.0,6.0,3.0,3.0,3.0"])
    with pytest.raises(ParseError, match="trait"):
        parse_logs(paths)
    paths = write_streams(tmp_path, weather=["2020-01-01,5.0,1010.0,0.0,140.0,10.0,3.0"])
    with pytest.raises(ParseError, match="humidity"):
        parse_logs(paths)


def test_filter_bluetooth_empty():
    assert filter_bluetooth([]) == []


def test_filter_bluetooth_retention_rule():
    scans = [
        BluetoothScan("s1", 10, "a", -80),
        BluetoothScan("s1", 20, "b", -40),
        BluetoothScan("s1", 30, "c", 3),
        BluetoothScan("s1", 40, "d", 0),
    ]
    kept = filter_bluetooth(scans)
    assert [s.rssi for s in kept] == [3, 0]


def test_filter_bluetooth_idempotent_and_order_preserving():
    rng = np.random.default_rng(5)
    scans = [
        BluetoothScan("s1", int(t), f"id{i}", int(r))
        for i, (t, r) in enumerate(zip(rng.integers(0, 10_000, 50), rng.integers(-90, 40, 50)))
    ]
    once = filter_bluetooth(scans)
    assert filter_bluetooth(once) == once
    assert len(once) <= len(scans)
    positions = [scans.index(s) for s in once]
    assert positions == sorted(positions)


def _dataset_with_report_dates(dates_by_subject: dict[str, list[dt.date]]) -> SubjectDataset:
    stress = {
        sid: tuple(StressReport(sid, d, 4) for d in sorted(dates))
        for sid, dates in dates_by_subject.items()
    }
    all_dates = [d for ds in dates_by_subject.values() for d in ds]
    return SubjectDataset(
        subjects=tuple(sorted(dates_by_subject)),
        calls={},
        sms={},
        bluetooth={},
        personality={},
        stress=stress,
        weather={},
        window=(min(all_dates), max(all_dates)),
    )


def _days(start: dt.date, n: int) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(n)]


def test_coverage_retains_long_runs_and_drops_short_ones():
    start = dt.date(2020, 1, 1)
    dataset = _dataset_with_report_dates(
        {
            "long": _days(start, 20),
            "short": _days(start, 13),
            "gappy": _days(start, 10) + _days(start + dt.timedelta(days=11), 10),
        }
    )
    assert validate_coverage(dataset, 14) == ["long"]


def test_coverage_threshold_one_keeps_any_reporter():
    dataset = _dataset_with_report_dates({"a": [dt.date(2020, 1, 1)], "b": [dt.date(2020, 2, 2)]})
    assert validate_coverage(dataset, 1) == ["a", "b"]


def test_coverage_empty_roster_raises():
    dataset = _dataset_with_report_dates({"a": _days(dt.date(2020, 1, 1), 5)})
    with pytest.raises(ValueError, match="no eligible subjects"):
        validate_coverage(dataset, 14)
    with pytest.raises(ValueError):
        validate_coverage(dataset, 0)


def test_longest_run_matches_brute_force():
    rng = np.random.default_rng(9)
    base = dt.date(2020, 1, 1)
    for _ in range(100):
        offsets = sorted(set(rng.integers(0, 40, size=rng.integers(1, 25)).tolist()))
        dates = [base + dt.timedelta(days=int(o)) for o in offsets]
        # oracle: scan every possible run start
        best = 0
        date_set = set(dates)
        for d in dates:
            run = 0
            while d + dt.timedelta(days=run) in date_set:
                run += 1
            best = max(best, run)
        assert longest_consecutive_run(dates) == best


def test_synth_round_trip_is_lossless(tmp_path):
    from collections import Counter

    config = synth.CohortConfig(n_subjects=5, n_days=12, seed=21)
    dataset = synth.generate(config)
    synth.emit_csv(dataset, tmp_path, config)
    parsed, report = parse_logs(StreamPaths.in_dir(tmp_path))
    assert parsed.subjects == dataset.subjects
    for sid in dataset.subjects:
        for stream in ("calls", "sms", "bluetooth", "stress"):
            expected = Counter(getattr(dataset, stream).get(sid, ()))
            actual = Counter(getattr(parsed, stream).get(sid, ()))
            assert actual == expected, f"{stream} mismatch for {sid}"
    assert parsed.personality == dataset.personality
    assert parsed.weather == dataset.weather
    for counts in report.streams.values():
        assert counts.duplicates_dropped == 0
