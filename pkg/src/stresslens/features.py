"""Per subject-day behavioral features from calls, sms and bluetooth sightings.

Every extractor returns a ``DailyBasicFeatures`` holding named daily scalars
and named sample sets (event-level value lists such as inter-event gaps).
Degenerate quantities (ratio with zero denominator, entropy of an empty
distribution) are encoded as NaN rather than 0, because 0 is a meaningful
value for all of them; imputation happens downstream at normalization time.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .entropy import CountDistribution, miller_madow, shannon_ml
from .ingest import (
    BluetoothScan,
    CallRecord,
    SmsRecord,
    SubjectDataset,
    day_of,
    filter_bluetooth,
)

MISSING = float("nan")

SLOT_SECONDS = 300
SLOTS_PER_DAY = 86400 // SLOT_SECONDS  # 288 five-minute slots

# "Night" is nowhere standardized for phone logs; we use [22:00, 07:00) local.
NIGHT_START_HOUR = 22
NIGHT_END_HOUR = 7

REPLY_WINDOW_SECONDS = 3600

DEFAULT_SLOT_THRESHOLDS = (4, 9, 19, 49)
DEFAULT_TOP_PERCENTS = (50, 80, 95)


@dataclass
class DailyBasicFeatures:
    subject_id: str
    date: dt.date
    scalars: dict[str, float] = field(default_factory=dict)
    samples: dict[str, list[float]] = field(default_factory=dict)

    def merge(self, other: "DailyBasicFeatures") -> None:
        if (other.subject_id, other.date) != (self.subject_id, self.date):
            raise ValueError("cannot merge features of different subject-days")
        overlap = set(self.scalars) & set(other.scalars)
        if overlap:
            raise ValueError(f"duplicate scalar names: {sorted(overlap)}")
        self.scalars.update(other.scalars)
        self.samples.update(other.samples)


@dataclass(frozen=True)
class ReplyStats:
    """Reply behavior for one day's texts; latencies are capped at one hour
    by construction of the matching rule."""

    response_rate: float
    latencies: tuple[float, ...]


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else MISSING


def _percent(part: float, whole: float) -> float:
    return 100.0 * part / whole if whole else MISSING


def _entropy_pair(peer_ids: Iterable[str]) -> tuple[float, float]:
    dist = CountDistribution.from_observations(peer_ids)
    if dist.total == 0:
        return MISSING, MISSING
    return shannon_ml(dist), miller_madow(dist)


def _inter_event_times(timestamps: Sequence[int]) -> list[float]:
    ordered = sorted(timestamps)
    return [float(b - a) for a, b in zip(ordered, ordered[1:])]


def _is_night(timestamp: int, tz: dt.tzinfo) -> bool:
    hour = dt.datetime.fromtimestamp(timestamp, tz).hour
    return hour >= NIGHT_START_HOUR or hour < NIGHT_END_HOUR


def sms_reply_stats(
    day_sms: Sequence[SmsRecord], history: Sequence[SmsRecord] = ()
) -> ReplyStats:
    """Match each received text with its first reply within one hour.

    A sent text to peer B is a reply iff it follows B's most recent received
    text by at most ``REPLY_WINDOW_SECONDS``; each received text is answered
    at most once (later sends to the same peer are not re-matched).
    ``history`` supplies texts preceding the day so replies to late-evening
    texts from the previous hour resolve correctly.
    """
    events = sorted(list(history) + list(day_sms), key=lambda r: (r.timestamp, r.direction))
    day_ids = {id(r) for r in day_sms}
    pending: dict[str, SmsRecord] = {}
    latencies: list[float] = []
    answered = 0
    for event in events:
        if event.direction == "incoming":
            pending[event.peer_id] = event
            continue
        received = pending.pop(event.peer_id, None)
        if received is None:
            continue
        gap = event.timestamp - received.timestamp
        if 0 <= gap <= REPLY_WINDOW_SECONDS:
            if id(event) in day_ids:
                latencies.append(float(gap))
            if id(received) in day_ids:
                answered += 1
    n_received = sum(1 for r in day_sms if r.direction == "incoming")
    rate = answered / n_received if n_received else MISSING
    return ReplyStats(response_rate=rate, latencies=tuple(latencies))


def call_sms_basic(
    subject_id: str,
    day: dt.date,
    calls: Sequence[CallRecord],
    sms: Sequence[SmsRecord],
    tz: dt.tzinfo = dt.timezone.utc,
) -> DailyBasicFeatures:
    """Daily call/sms usage, diversity, active-behavior and regularity features."""
    incoming = [c for c in calls if c.direction == "incoming"]
    outgoing = [c for c in calls if c.direction == "outgoing"]
    missed = [c for c in calls if c.direction == "missed"]
    received = [s for s in sms if s.direction == "incoming"]
    sent = [s for s in sms if s.direction == "outgoing"]

    n_calls = len(calls)
    call_ent = {
        "Outgoing": _entropy_pair(c.peer_id for c in outgoing),
        "OutgoingAndIncoming": _entropy_pair(c.peer_id for c in outgoing + incoming),
        "MissedOutgoing": _entropy_pair(c.peer_id for c in missed + outgoing),
    }
    sms_ent = {
        "Outgoing": _entropy_pair(s.peer_id for s in sent),
        "OutgoingAndIncoming": _entropy_pair(s.peer_id for s in sms),
    }

    scalars = {
        "call.AllEventsPerDay": float(n_calls),
        "call.OutgoingAndIncomingPerDay": float(len(outgoing) + len(incoming)),
        "call.IncomingPerDay": float(len(incoming)),
        "call.OutgoingPerDay": float(len(outgoing)),
        "call.MissedPerDay": float(len(missed)),
        "call.OutgoingToIncomingRatio": _ratio(len(outgoing), len(incoming)),
        "call.MissedToOutgoingAndIncomingRatio": _ratio(
            len(missed), len(outgoing) + len(incoming)
        ),
        "call.UniqueContactsCalled": float(len({c.peer_id for c in outgoing})),
        "call.UniqueContactsCalling": float(len({c.peer_id for c in incoming})),
        "call.UniqueContactsCommunicated": float(
            len({c.peer_id for c in outgoing + incoming})
        ),
        "call.UniqueContactsMissed": float(len({c.peer_id for c in missed})),
        "call.ContactsToInteractionsRatio": _ratio(
            len({c.peer_id for c in calls}), n_calls
        ),
        "call.PercentDuringNight": _percent(
            sum(1 for c in calls if _is_night(c.timestamp, tz)), n_calls
        ),
        "call.PercentInitiated": _percent(len(outgoing), n_calls),
        "sms.AllEventsPerDay": float(len(sms)),
        "sms.IncomingAndOutgoingPerDay": float(len(sms)),
        "sms.IncomingPerDay": float(len(received)),
        "sms.OutgoingPerDay": float(len(sent)),
        "sms.OutgoingToIncomingRatio": _ratio(len(sent), len(received)),
        "sms.UniqueContactsReceivedFrom": float(len({s.peer_id for s in received})),
        "sms.UniqueContactsSentTo": float(len({s.peer_id for s in sent})),
        "sms.ContactsToInteractionsRatio": _ratio(len({s.peer_id for s in sms}), len(sms)),
        "sms.PercentInitiated": _percent(len(sent), len(sms)),
    }
    for subset, (ml, mm) in call_ent.items():
        scalars[f"call.EntropyShannon{subset}Total"] = ml
        scalars[f"call.EntropyMillerMadow{subset}Total"] = mm
    for subset, (ml, mm) in sms_ent.items():
        scalars[f"sms.{subset}TotalEntropyShannon"] = ml
        scalars[f"sms.{subset}TotalEntropyMillerMadow"] = mm

    samples = {
        "call.InterEventTime": _inter_event_times([c.timestamp for c in calls]),
        "sms.InterEventTime": _inter_event_times([s.timestamp for s in sms]),
        "callsms.InterEventTime": _inter_event_times(
            [c.timestamp for c in calls] + [s.timestamp for s in sms]
        ),
    }
    return DailyBasicFeatures(subject_id, day, scalars, samples)


def _slot_index(timestamp: int, day: dt.date, tz: dt.tzinfo) -> int:
    day_start = dt.datetime.combine(day, dt.time.min, tzinfo=tz).timestamp()
    return int((timestamp - day_start) // SLOT_SECONDS)


def bluetooth_basic(
    subject_id: str,
    day: dt.date,
    scans: Sequence[BluetoothScan],
    tz: dt.tzinfo = dt.timezone.utc,
    slot_thresholds: Sequence[int] = DEFAULT_SLOT_THRESHOLDS,
    top_percents: Sequence[int] = DEFAULT_TOP_PERCENTS,
) -> DailyBasicFeatures:
    """Daily proximity features over signal-filtered bluetooth sightings.

    Sightings are collapsed to (device, 5-minute slot) pairs before counting,
    so a device camped next to the phone counts once per slot; inter-event
    gaps use the raw sequence of distinct scan moments.
    """
    # sorted so accumulation order (and thus entropy rounding) is identical
    # across processes regardless of string-hash seeding
    sightings = sorted({(s.seen_id, _slot_index(s.timestamp, day, tz)) for s in scans})
    per_id: dict[str, int] = {}
    for seen_id, _slot in sightings:
        per_id[seen_id] = per_id.get(seen_id, 0) + 1
    total_sightings = len(sightings)

    # deterministic order: most seen first, then id
    ranked = sorted(per_id.items(), key=lambda kv: (-kv[1], kv[0]))
    dist = CountDistribution(tuple(per_id.values()))
    ent_ml, ent_mm = (
        (shannon_ml(dist), miller_madow(dist)) if total_sightings else (MISSING, MISSING)
    )

    scalars = {
        "bluetooth.UniqueIdsPerDay": float(len(per_id)),
        "bluetooth.MostCommonIdHits": float(ranked[0][1]) if ranked else 0.0,
        "bluetooth.ContactsToInteractionsRatio": _ratio(len(per_id), total_sightings),
        "bluetooth.TotalEntropyShannon": ent_ml,
        "bluetooth.TotalEntropyMillerMadow": ent_mm,
    }
    for percent in top_percents:
        needed = percent / 100.0 * total_sightings
        covered = 0.0
        n_ids = 0
        for _seen_id, count in ranked:
            if covered >= needed:
                break
            covered += count
            n_ids += 1
        scalars[f"bluetooth.IdsAccountingFor{percent:02d}PercentSeen"] = float(n_ids)
    for k in slot_thresholds:
        scalars[f"bluetooth.IdsMoreThan{k:02d}TimeSlotsSeen"] = float(
            sum(1 for _sid, count in ranked if count > k)
        )

    scan_moments = sorted({s.timestamp for s in scans})
    samples = {
        "bluetooth.TimeForWhichIdSeen": [float(count) for _sid, count in ranked],
        "bluetooth.InterEventTime": _inter_event_times(scan_moments),
    }
    return DailyBasicFeatures(subject_id, day, scalars, samples)


WEATHER_FEATURES = {
    "weather.MeanTemperature": "mean_temperature",
    "weather.Pressure": "pressure",
    "weather.Precipitation": "precipitation",
    "weather.Humidity": "humidity",
    "weather.Visibility": "visibility",
    "weather.WindSpeed": "wind_speed",
}


def context_features(weather_day, profile) -> dict[str, float]:
    """Pass-through weather and trait scalars under their canonical names."""
    if weather_day is None:
        raise ValueError("missing weather for requested date")
    if profile is None:
        raise ValueError("missing personality traits for subject")
    out = {name: float(getattr(weather_day, attr)) for name, attr in WEATHER_FEATURES.items()}
    for trait, value in profile.traits().items():
        out[f"personality.{trait}"] = float(value)
    return out


def label_stress(score: int, scheme: str = "binary") -> int:
    """Collapse a 1..7 stress score into classes.

    binary:  scores <= 4 -> 0 (not stressed), > 4 -> 1 (stressed).
    ternary: scores < 4 -> -1, == 4 -> 0, > 4 -> +1.
    """
    if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 7:
        raise ValueError(f"stress score must be an integer in 1..7, got {score!r}")
    if scheme == "binary":
        return 0 if score <= 4 else 1
    if scheme == "ternary":
        return -1 if score < 4 else (0 if score == 4 else 1)
    raise ValueError(f"unknown label scheme {scheme!r}")


def extract_daily(
    dataset: SubjectDataset,
    roster: Sequence[str] | None = None,
    tz: dt.tzinfo | None = None,
) -> list[DailyBasicFeatures]:
    """Extract merged daily features for every subject-day in the study window.

    Days without events still produce rows (zero counts, NaN degeneracies) so
    that trailing-window statistics are well defined on every day.
    """
    if dataset.window is None:
        return []
    tz = tz or dataset.timezone
    first, last = dataset.window
    subjects = list(roster) if roster is not None else list(dataset.subjects)
    n_days = (last - first).days + 1
    out: list[DailyBasicFeatures] = []
    for subject in subjects:
        calls_by_day: dict[dt.date, list[CallRecord]] = {}
        for rec in dataset.calls.get(subject, ()):
            calls_by_day.setdefault(day_of(rec.timestamp, tz), []).append(rec)
        sms_by_day: dict[dt.date, list[SmsRecord]] = {}
        for rec in dataset.sms.get(subject, ()):
            sms_by_day.setdefault(day_of(rec.timestamp, tz), []).append(rec)
        scans_by_day: dict[dt.date, list[BluetoothScan]] = {}
        for rec in filter_bluetooth(dataset.bluetooth.get(subject, ())):
            scans_by_day.setdefault(day_of(rec.timestamp, tz), []).append(rec)

        all_sms = sorted(dataset.sms.get(subject, ()), key=lambda r: r.timestamp)
        for offset in range(n_days):
            day = first + dt.timedelta(days=offset)
            day_calls = calls_by_day.get(day, [])
            day_sms = sms_by_day.get(day, [])
            daily = call_sms_basic(subject, day, day_calls, day_sms, tz)
            daily.merge(bluetooth_basic(subject, day, scans_by_day.get(day, []), tz))

            day_start = dt.datetime.combine(day, dt.time.min, tzinfo=tz).timestamp()
            history = [
                r
                for r in all_sms
                if day_start - REPLY_WINDOW_SECONDS <= r.timestamp < day_start
            ]
            reply = sms_reply_stats(day_sms, history)
            daily.scalars["sms.ResponseRate"] = reply.response_rate
            daily.samples["sms.RepliedEvents.Latency"] = list(reply.latencies)
            out.append(daily)
    return out
