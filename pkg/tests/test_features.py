from __future__ import annotations

import datetime as dt
import math

import pytest

from stresslens.entropy import CountDistribution, miller_madow, shannon_ml
from stresslens.features import (
    MISSING,
    bluetooth_basic,
    call_sms_basic,
    context_features,
    extract_daily,
    label_stress,
    sms_reply_stats,
)
from stresslens.ingest import (
    BluetoothScan,
    CallRecord,
    PersonalityProfile,
    SmsRecord,
    WeatherDay,
)

DAY = dt.date(2020, 3, 5)
T0 = int(dt.datetime(2020, 3, 5, 9, 0, tzinfo=dt.timezone.utc).timestamp())


def call(offset, direction, peer, duration=30):
    return CallRecord("s1", T0 + offset, direction, peer, 0 if direction == "missed" else duration)


def sms(offset, direction, peer):
    return SmsRecord("s1", T0 + offset, direction, peer)


def scan(offset, seen, rssi=10):
    return BluetoothScan("s1", T0 + offset, seen, rssi)


class TestCallSmsBasic:
    def test_counts_and_unique_contacts(self):
        daily = call_sms_basic(
            "s1", DAY, [call(0, "outgoing", "a"), call(60, "outgoing", "b"), call(120, "incoming", "a")], []
        )
        s = daily.scalars
        assert s["call.AllEventsPerDay"] == 3
        assert s["call.OutgoingPerDay"] == 2
        assert s["call.IncomingPerDay"] == 1
        assert s["call.MissedPerDay"] == 0
        assert s["call.UniqueContactsCommunicated"] == 2
        assert s["call.UniqueContactsCalled"] == 2
        assert s["call.UniqueContactsCalling"] == 1
        # contact counts {a: 2, b: 1} feed the entropy ops
        expected = shannon_ml(CountDistribution((2, 1)))
        assert s["call.EntropyShannonOutgoingAndIncomingTotal"] == pytest.approx(expected)
        assert s["call.EntropyMillerMadowOutgoingAndIncomingTotal"] == pytest.approx(
            miller_madow(CountDistribution((2, 1)))
        )

    def test_empty_day_zero_counts_and_missing_degeneracies(self):
        daily = call_sms_basic("s1", DAY, [], [])
        s = daily.scalars
        assert s["call.AllEventsPerDay"] == 0
        assert s["sms.AllEventsPerDay"] == 0
        assert math.isnan(s["call.OutgoingToIncomingRatio"])
        assert math.isnan(s["call.EntropyShannonOutgoingTotal"])
        assert math.isnan(s["sms.OutgoingTotalEntropyMillerMadow"])
        assert math.isnan(s["call.PercentDuringNight"])
        assert daily.samples["call.InterEventTime"] == []

    def test_inter_event_times_are_consecutive_gaps(self):
        daily = call_sms_basic(
            "s1",
            DAY,
            [call(0, "outgoing", "a"), call(60, "outgoing", "a"), call(180, "incoming", "b")],
            [],
        )
        assert daily.samples["call.InterEventTime"] == [60.0, 120.0]

    def test_total_equals_direction_sum(self):
        events = [call(0, "incoming", "a"), call(9, "outgoing", "b"), call(22, "missed", "c")]
        s = call_sms_basic("s1", DAY, events, []).scalars
        assert s["call.AllEventsPerDay"] == (
            s["call.IncomingPerDay"] + s["call.OutgoingPerDay"] + s["call.MissedPerDay"]
        )
        assert s["call.OutgoingAndIncomingPerDay"] == 2

    def test_percent_night_uses_22_to_7_window(self):
        night = int(dt.datetime(2020, 3, 5, 23, 30, tzinfo=dt.timezone.utc).timestamp()) - T0
        early = int(dt.datetime(2020, 3, 5, 6, 30, tzinfo=dt.timezone.utc).timestamp()) - T0
        s = call_sms_basic(
            "s1",
            DAY,
            [call(0, "outgoing", "a"), call(night, "outgoing", "a"), call(early, "outgoing", "a")],
            [],
        ).scalars
        assert s["call.PercentDuringNight"] == pytest.approx(100 * 2 / 3)
        assert s["call.PercentInitiated"] == pytest.approx(100.0)


class TestReplyStats:
    def test_reply_within_hour_counts(self):
        stats = sms_reply_stats([sms(0, "incoming", "b"), sms(1800, "outgoing", "b")])
        assert stats.response_rate == 1.0
        assert stats.latencies == (1800.0,)

    def test_reply_after_an_hour_does_not_count(self):
        stats = sms_reply_stats([sms(0, "incoming", "b"), sms(3660, "outgoing", "b")])
        assert stats.response_rate == 0.0
        assert stats.latencies == ()

    def test_boundary_exactly_one_hour_counts(self):
        stats = sms_reply_stats([sms(0, "incoming", "b"), sms(3600, "outgoing", "b")])
        assert stats.latencies == (3600.0,)

    def test_only_first_send_matches(self):
        stats = sms_reply_stats(
            [sms(0, "incoming", "b"), sms(100, "outgoing", "b"), sms(200, "outgoing", "b")]
        )
        assert stats.response_rate == 1.0
        assert stats.latencies == (100.0,)

    def test_reply_tracks_the_last_received_text(self):
        stats = sms_reply_stats(
            [sms(0, "incoming", "b"), sms(500, "incoming", "b"), sms(700, "outgoing", "b")]
        )
        # the send answers the 500s text; the 0s text stays unanswered
        assert stats.latencies == (200.0,)
        assert stats.response_rate == pytest.approx(0.5)

    def test_history_resolves_replies_near_midnight(self):
        history = [sms(-600, "incoming", "b")]
        stats = sms_reply_stats([sms(300, "outgoing", "b")], history)
        assert stats.latencies == (900.0,)
        assert math.isnan(stats.response_rate)  # no received texts inside the day

    def test_no_received_texts_gives_missing_rate(self):
        assert math.isnan(sms_reply_stats([sms(0, "outgoing", "b")]).response_rate)

    def test_latencies_capped_by_construction(self):
        stats = sms_reply_stats(
            [s for i in range(20) for s in (sms(i * 4000, "incoming", "b"), sms(i * 4000 + 1200, "outgoing", "b"))]
        )
        assert all(lat <= 3600 for lat in stats.latencies)


class TestBluetoothBasic:
    def test_slot_threshold_counts(self):
        scans = [scan(i * 300, "a") for i in range(12)]  # 12 distinct slots
        s = bluetooth_basic("s1", DAY, scans).scalars
        assert s["bluetooth.IdsMoreThan09TimeSlotsSeen"] == 1
        assert s["bluetooth.IdsMoreThan19TimeSlotsSeen"] == 0
        assert s["bluetooth.IdsMoreThan04TimeSlotsSeen"] == 1

    def test_sighting_counts_feed_entropy_and_most_common(self):
        scans = [scan(0, "a"), scan(300, "a"), scan(600, "a"), scan(900, "b")]
        daily = bluetooth_basic("s1", DAY, scans)
        s = daily.scalars
        assert s["bluetooth.MostCommonIdHits"] == 3
        assert s["bluetooth.UniqueIdsPerDay"] == 2
        assert s["bluetooth.TotalEntropyShannon"] == pytest.approx(
            shannon_ml(CountDistribution((3, 1)))
        )
        assert sorted(daily.samples["bluetooth.TimeForWhichIdSeen"]) == [1.0, 3.0]

    def test_same_slot_sightings_collapse(self):
        scans = [scan(10, "a"), scan(10, "a"), scan(20, "a")]  # same 5-minute slot
        s = bluetooth_basic("s1", DAY, scans).scalars
        assert s["bluetooth.MostCommonIdHits"] == 1

    def test_empty_day(self):
        daily = bluetooth_basic("s1", DAY, [])
        assert daily.scalars["bluetooth.UniqueIdsPerDay"] == 0
        assert daily.scalars["bluetooth.MostCommonIdHits"] == 0
        assert math.isnan(daily.scalars["bluetooth.TotalEntropyMillerMadow"])
        assert daily.samples["bluetooth.InterEventTime"] == []

    def test_top_share_counts(self):
        scans = [scan(i * 300, "a") for i in range(8)] + [scan(i * 300 + 60, f"x{i}") for i in range(2)]
        s = bluetooth_basic("s1", DAY, scans).scalars
        assert s["bluetooth.IdsAccountingFor50PercentSeen"] == 1  # 8 of 10 sightings
        assert s["bluetooth.IdsAccountingFor95PercentSeen"] == 3


class TestContextAndLabels:
    WEATHER = WeatherDay(DAY, 4.5, 1011.0, 1.2, 61.0, 12.0, 4.4)
    TRAITS = PersonalityProfile("s1", 3.2, 2.1, 4.0, 3.5, 3.9)

    def test_passthrough_names(self):
        out = context_features(self.WEATHER, self.TRAITS)
        assert out["weather.MeanTemperature"] == 4.5
        assert out["weather.WindSpeed"] == 4.4
        assert out["personality.Extraversion"] == 3.2
        assert out["personality.Openness"] == 3.9
        assert len(out) == 11

    def test_missing_context_raises(self):
        with pytest.raises(ValueError, match="weather"):
            context_features(None, self.TRAITS)
        with pytest.raises(ValueError, match="traits"):
            context_features(self.WEATHER, None)

    def test_binary_labels(self):
        assert label_stress(4, "binary") == 0
        assert label_stress(5, "binary") == 1
        assert label_stress(1, "binary") == 0
        assert label_stress(7, "binary") == 1

    def test_ternary_labels(self):
        assert label_stress(3, "ternary") == -1
        assert label_stress(4, "ternary") == 0
        assert label_stress(5, "ternary") == 1

    def test_label_errors(self):
        with pytest.raises(ValueError):
            label_stress(0)
        with pytest.raises(ValueError):
            label_stress(8)
        with pytest.raises(ValueError):
            label_stress(4, "quaternary")


class TestDatasetWideInvariants:
    def test_ranges_and_count_consistency(self, small_cohort):
        _config, dataset = small_cohort
        for daily in extract_daily(dataset):
            s = daily.scalars
            assert s["call.AllEventsPerDay"] == (
                s["call.IncomingPerDay"] + s["call.OutgoingPerDay"] + s["call.MissedPerDay"]
            )
            assert s["call.UniqueContactsCommunicated"] <= (
                s["call.UniqueContactsCalled"] + s["call.UniqueContactsCalling"]
            )
            for name, value in s.items():
                if math.isnan(value):
                    continue
                if "Percent" in name:
                    assert 0.0 <= value <= 100.0, name
                if name.endswith("ResponseRate"):
                    assert 0.0 <= value <= 1.0, name
            assert all(v <= 3600 for v in daily.samples["sms.RepliedEvents.Latency"])

    def test_time_shift_changes_only_night_percentage(self):
        calls = [call(0, "outgoing", "a"), call(3600, "incoming", "b"), call(7200, "missed", "c")]
        texts = [sms(100, "incoming", "b"), sms(900, "outgoing", "b")]
        scans = [scan(0, "a"), scan(300, "a"), scan(1500, "b")]
        shift = 46_800  # multiple of the 300s slot so slot counts translate rigidly

        def snapshot(offset):
            daily = call_sms_basic(
                "s1",
                DAY,
                [CallRecord("s1", c.timestamp + offset, c.direction, c.peer_id, c.duration) for c in calls],
                [SmsRecord("s1", t.timestamp + offset, t.direction, t.peer_id) for t in texts],
            )
            daily.merge(
                bluetooth_basic(
                    "s1", DAY, [BluetoothScan("s1", b.timestamp + offset, b.seen_id, b.rssi) for b in scans]
                )
            )
            return daily

        base, shifted = snapshot(0), snapshot(shift)
        for name in base.scalars:
            if name == "call.PercentDuringNight":
                continue
            a, b = base.scalars[name], shifted.scalars[name]
            assert (a == b) or (math.isnan(a) and math.isnan(b)), name
        assert base.samples == shifted.samples
        assert base.scalars["call.PercentDuringNight"] != shifted.scalars["call.PercentDuringNight"]

    def test_doubling_multiplicity_moves_only_the_correction(self):
        events = [call(0, "outgoing", "a"), call(60, "outgoing", "a"), call(120, "outgoing", "b")]
        doubled = events + [
            CallRecord("s1", c.timestamp + 1, c.direction, c.peer_id, c.duration) for c in events
        ]
        s1 = call_sms_basic("s1", DAY, events, []).scalars
        s2 = call_sms_basic("s1", DAY, doubled, []).scalars
        assert s2["call.EntropyShannonOutgoingTotal"] == pytest.approx(
            s1["call.EntropyShannonOutgoingTotal"], abs=1e-12
        )
        # correction shrinks from (m-1)/2N to (m-1)/4N
        m, n = 2, 3
        delta1 = s1["call.EntropyMillerMadowOutgoingTotal"] - s1["call.EntropyShannonOutgoingTotal"]
        delta2 = s2["call.EntropyMillerMadowOutgoingTotal"] - s2["call.EntropyShannonOutgoingTotal"]
        assert delta1 == pytest.approx((m - 1) / (2 * n), abs=1e-12)
        assert delta2 == pytest.approx((m - 1) / (4 * n), abs=1e-12)
