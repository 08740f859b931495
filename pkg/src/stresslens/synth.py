"""Seeded synthetic cohort with a planted, configurable stress signal.

A latent daily stress level is the sum of three standardized channels
(personality, weather, day-level behavior) plus noise, squashed through a
logistic and discretized to the 1..7 reporting scale.  The additive weights
are individually modest, so no single channel separates the classes well,
while their sum does; the intercept is calibrated so the binary class split
lands near the configured balance.

Event streams are drawn per subject-day with rates tied to the behavior
latent (and optionally to extraversion), which is how the daily stress
signal reaches the phone-usage features.  Everything is deterministic given
the seed: per-subject latent and event streams are spawned independently
from the master seed, so generation order never shifts results.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .ingest import (
    BluetoothScan,
    CallRecord,
    PersonalityProfile,
    SmsRecord,
    StressReport,
    SubjectDataset,
    WeatherDay,
)

DAY_SECONDS = 86400
SLOT_SECONDS = 300

TRAIT_NAMES = ("extraversion", "neuroticism", "agreeableness", "conscientiousness", "openness")
# latent channel mixes (standardized inputs); signs follow the usual findings:
# neurotic up, conscientious/extravert/agreeable down
TRAIT_MIX = (-0.45, 0.75, -0.30, -0.55, 0.15)
WEATHER_MIX = {  # over standardized daily series
    "mean_temperature": -0.55,
    "pressure": 0.10,
    "precipitation": 0.20,
    "humidity": 0.50,
    "visibility": -0.30,
    "wind_speed": 0.45,
}


@dataclass(frozen=True)
class CohortConfig:
    n_subjects: int = 111
    n_days: int = 180
    seed: int = 0
    start_date: dt.date = dt.date(2010, 11, 12)
    personality_weight: float = 1.15
    weather_weight: float = 1.0
    behavior_weight: float = 1.0
    noise: float = 0.55
    class_balance: float = 0.6384  # share of "not stressed" (scores <= 4)
    behavior_rate_coupling: float = 0.55
    trait_rate_coupling: float = 0.0
    base_call_rate: float = 6.0
    base_sms_rate: float = 7.0
    base_bluetooth_rate: float = 50.0
    reply_probability: float = 0.6
    report_dropout: float = 0.0
    call_pool: int = 12
    sms_pool: int = 10
    bluetooth_pool: int = 15

    def validate(self) -> None:
        if self.n_subjects < 2:
            raise ValueError("need at least 2 subjects")
        if self.n_days < 1:
            raise ValueError("need at least 1 day")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError("class balance must be inside (0, 1)")
        weights = (
            self.personality_weight,
            self.weather_weight,
            self.behavior_weight,
            self.noise,
        )
        if any(not math.isfinite(w) for w in weights):
            raise ValueError("weights must be finite")
        if all(w == 0.0 for w in weights):
            raise ValueError("no signal: all channel weights and noise are zero")


@dataclass
class GroundTruth:
    """Latent state behind a generated cohort, for oracle-style tests."""

    config: CohortConfig
    subjects: tuple[str, ...]
    dates: tuple[dt.date, ...]
    traits: np.ndarray  # (n_subjects, 5) in trait order
    weather: list[WeatherDay]
    latent: np.ndarray  # (n_subjects, n_days) pre-logistic
    latent01: np.ndarray  # logistic of latent
    scores: np.ndarray  # (n_subjects, n_days) int 1..7
    contributions: dict[str, np.ndarray]  # channel -> (n_subjects, n_days)


def _standardize(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    return (values - values.mean()) / sd if sd > 0 else np.zeros_like(values)


def _streams(config: CohortConfig):
    children = np.random.SeedSequence(config.seed).spawn(2 + 2 * config.n_subjects)
    weather = np.random.Generator(np.random.PCG64(children[0]))
    traits = np.random.Generator(np.random.PCG64(children[1]))
    latent = [
        np.random.Generator(np.random.PCG64(children[2 + 2 * i]))
        for i in range(config.n_subjects)
    ]
    events = [
        np.random.Generator(np.random.PCG64(children[3 + 2 * i]))
        for i in range(config.n_subjects)
    ]
    return weather, traits, latent, events


def _make_weather(config: CohortConfig, rng: np.random.Generator) -> list[WeatherDay]:
    days = np.arange(config.n_days)
    start_doy = config.start_date.timetuple().tm_yday
    phase = 2 * np.pi * (start_doy + days - 196) / 365.25  # warm peak mid-July
    temperature = np.round(9.0 + 11.5 * np.cos(phase) + rng.normal(0, 2.4, config.n_days), 1)
    pressure = np.round(1013.0 + rng.normal(0, 7.0, config.n_days), 1)
    humidity = np.round(
        np.clip(64.0 + 11.0 * np.sin(days / 4.7) + rng.normal(0, 9.0, config.n_days), 5, 100), 1
    )
    rain = rng.random(config.n_days) < 0.37
    precipitation = np.round(np.where(rain, rng.exponential(4.0, config.n_days), 0.0), 1)
    visibility = np.round(
        np.clip(17.0 - 0.07 * humidity + rng.normal(0, 2.0, config.n_days), 1, 30), 1
    )
    wind = np.round(rng.gamma(2.0, 1.9, config.n_days), 1)
    return [
        WeatherDay(
            date=config.start_date + dt.timedelta(days=int(d)),
            mean_temperature=float(temperature[d]),
            pressure=float(pressure[d]),
            precipitation=float(precipitation[d]),
            humidity=float(humidity[d]),
            visibility=float(visibility[d]),
            wind_speed=float(wind[d]),
        )
        for d in days
    ]


def _subject_ids(config: CohortConfig) -> tuple[str, ...]:
    width = len(str(config.n_subjects))
    return tuple(f"s{i:0{width}d}" for i in range(1, config.n_subjects + 1))


def ground_truth(config: CohortConfig | None = None) -> GroundTruth:
    """Latent stress state for a config, without generating event streams."""
    if config is None:
        config = CohortConfig()
    config.validate()
    weather_rng, traits_rng, latent_rngs, _events = _streams(config)

    weather = _make_weather(config, weather_rng)
    weather_z = {
        name: _standardize(np.array([getattr(day, name) for day in weather]))
        for name in WEATHER_MIX
    }
    weather_score = _standardize(
        sum(coef * weather_z[name] for name, coef in WEATHER_MIX.items())
    )

    traits = np.clip(np.round(traits_rng.normal(3.0, 0.66, (config.n_subjects, 5)), 2), 1.0, 5.0)
    trait_z = np.column_stack([_standardize(traits[:, j]) for j in range(5)])
    personality_score = _standardize(trait_z @ np.asarray(TRAIT_MIX))

    n_s, n_d = config.n_subjects, config.n_days
    behavior = np.empty((n_s, n_d))
    noise = np.empty((n_s, n_d))
    for i, rng in enumerate(latent_rngs):
        behavior[i] = rng.normal(0.0, 1.0, n_d)
        noise[i] = rng.normal(0.0, 1.0, n_d)

    contributions = {
        "personality": np.repeat(
            (config.personality_weight * personality_score)[:, None], n_d, axis=1
        ),
        "weather": np.repeat((config.weather_weight * weather_score)[None, :], n_s, axis=0),
        "behavior": config.behavior_weight * behavior,
        "noise": config.noise * noise,
    }
    z = sum(contributions.values())

    sd = math.sqrt(
        config.personality_weight**2
        + config.weather_weight**2
        + config.behavior_weight**2
        + config.noise**2
    )
    threshold = math.log(4.0 / 3.0)  # logistic hits 4/7, the binary class edge
    intercept = threshold - NormalDist().inv_cdf(config.class_balance) * sd
    latent01 = 1.0 / (1.0 + np.exp(-(z + intercept)))
    scores = 1 + np.minimum(np.floor(latent01 * 7).astype(np.int64), 6)

    return GroundTruth(
        config=config,
        subjects=_subject_ids(config),
        dates=tuple(config.start_date + dt.timedelta(days=d) for d in range(n_d)),
        traits=traits,
        weather=weather,
        latent=z,
        latent01=latent01,
        scores=scores,
        contributions=contributions,
    )


def _zipf_weights(size: int, exponent: float = 1.1) -> np.ndarray:
    w = 1.0 / np.arange(1, size + 1) ** exponent
    return w / w.sum()


def _day_start(config: CohortConfig, day_index: int) -> int:
    day = config.start_date + dt.timedelta(days=day_index)
    return int(dt.datetime.combine(day, dt.time.min, tzinfo=dt.timezone.utc).timestamp())


def generate(config: CohortConfig | None = None) -> SubjectDataset:
    """Generate the full six-stream dataset for a seeded cohort."""
    if config is None:
        config = CohortConfig()
    truth = ground_truth(config)
    _weather, _traits, _latent, event_rngs = _streams(config)

    subjects = truth.subjects
    ext_z = _standardize(truth.traits[:, TRAIT_NAMES.index("extraversion")])
    behavior = truth.contributions["behavior"]
    b_scale = config.behavior_weight if config.behavior_weight != 0 else 1.0

    calls: dict[str, tuple[CallRecord, ...]] = {}
    sms: dict[str, tuple[SmsRecord, ...]] = {}
    bluetooth: dict[str, tuple[BluetoothScan, ...]] = {}
    stress: dict[str, tuple[StressReport, ...]] = {}
    personality: dict[str, PersonalityProfile] = {}

    for i, subject in enumerate(subjects):
        rng = event_rngs[i]
        personality[subject] = PersonalityProfile(
            subject, *(float(v) for v in truth.traits[i])
        )
        call_peers = [f"peer_{subject}_{j:02d}" for j in range(config.call_pool)]
        sms_peers = [f"peer_{subject}_{j:02d}" for j in range(config.sms_pool)]
        devices = [f"dev_{subject}_{j:02d}" for j in range(config.bluetooth_pool)]
        call_w = _zipf_weights(config.call_pool)
        sms_w = _zipf_weights(config.sms_pool)
        dev_w = _zipf_weights(config.bluetooth_pool)

        subject_calls: list[CallRecord] = []
        subject_sms: list[SmsRecord] = []
        subject_scans: list[BluetoothScan] = []
        subject_stress: list[StressReport] = []

        for d in range(config.n_days):
            start = _day_start(config, d)
            u_b = behavior[i, d] / b_scale  # unit-variance daily behavior latent
            g = math.exp(
                config.behavior_rate_coupling * u_b + config.trait_rate_coupling * ext_z[i]
            )

            n_calls = min(int(rng.poisson(config.base_call_rate * g)), 80)
            if n_calls:
                times = np.sort(rng.choice(DAY_SECONDS, size=n_calls, replace=False))
                directions = rng.choice(
                    ["incoming", "outgoing", "missed"], size=n_calls, p=[0.42, 0.44, 0.14]
                )
                peers = rng.choice(call_peers, size=n_calls, p=call_w)
                for t, direction, peer in zip(times, directions, peers):
                    duration = 0 if direction == "missed" else int(
                        min(math.exp(rng.normal(4.2, 1.0)), 7200)
                    )
                    subject_calls.append(
                        CallRecord(subject, start + int(t), str(direction), str(peer), duration)
                    )

            n_sms = min(int(rng.poisson(config.base_sms_rate * g)), 90)
            taken: set[tuple[int, str, str]] = set()
            if n_sms:
                times = np.sort(rng.choice(DAY_SECONDS, size=n_sms, replace=False))
                directions = rng.choice(["incoming", "outgoing"], size=n_sms, p=[0.5, 0.5])
                peers = rng.choice(sms_peers, size=n_sms, p=sms_w)
                for t, direction, peer in zip(times, directions, peers):
                    ts = start + int(t)
                    key = (ts, str(direction), str(peer))
                    if key in taken:
                        continue
                    taken.add(key)
                    subject_sms.append(SmsRecord(subject, ts, str(direction), str(peer)))
                    # replies keep the reply-latency features populated
                    if direction == "incoming" and rng.random() < config.reply_probability:
                        delay = int(rng.uniform(45, 2700))
                        reply_ts = ts + delay
                        reply_key = (reply_ts, "outgoing", str(peer))
                        if reply_ts - start < DAY_SECONDS and reply_key not in taken:
                            taken.add(reply_key)
                            subject_sms.append(
                                SmsRecord(subject, reply_ts, "outgoing", str(peer))
                            )

            n_hits = min(int(rng.poisson(config.base_bluetooth_rate * g)), 600)
            if n_hits:
                ids = rng.choice(devices, size=n_hits, p=dev_w)
                slots = rng.integers(0, DAY_SECONDS // SLOT_SECONDS, size=n_hits)
                sightings = sorted({(int(s), str(dev)) for s, dev in zip(slots, ids)})
                strengths = rng.integers(0, 41, size=len(sightings))
                for (slot, dev), rssi in zip(sightings, strengths):
                    subject_scans.append(
                        BluetoothScan(subject, start + slot * SLOT_SECONDS, dev, int(rssi))
                    )

            if config.report_dropout <= 0.0 or rng.random() >= config.report_dropout:
                subject_stress.append(
                    StressReport(subject, truth.dates[d], int(truth.scores[i, d]))
                )

        calls[subject] = tuple(sorted(subject_calls, key=lambda r: r.timestamp))
        sms[subject] = tuple(sorted(subject_sms, key=lambda r: r.timestamp))
        bluetooth[subject] = tuple(sorted(subject_scans, key=lambda r: r.timestamp))
        stress[subject] = tuple(subject_stress)

    return SubjectDataset(
        subjects=subjects,
        calls=calls,
        sms=sms,
        bluetooth=bluetooth,
        personality=personality,
        stress=stress,
        weather={day.date: day for day in truth.weather},
        window=(truth.dates[0], truth.dates[-1]),
        timezone=dt.timezone.utc,
    )


def emit_csv(dataset: SubjectDataset, directory: str | Path, config: CohortConfig | None = None) -> dict:
    """Write the six ingest-format CSV files plus a manifest; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    counts: dict[str, int] = {}

    def write(name: str, header: list[str], rows) -> None:
        rows = list(rows)
        counts[name] = len(rows)
        with open(directory / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)

    write(
        "calls",
        ["subject_id", "timestamp", "direction", "peer_id", "duration"],
        (
            [r.subject_id, r.timestamp, r.direction, r.peer_id, r.duration]
            for s in dataset.subjects
            for r in dataset.calls.get(s, ())
        ),
    )
    write(
        "sms",
        ["subject_id", "timestamp", "direction", "peer_id"],
        (
            [r.subject_id, r.timestamp, r.direction, r.peer_id]
            for s in dataset.subjects
            for r in dataset.sms.get(s, ())
        ),
    )
    write(
        "bluetooth",
        ["subject_id", "timestamp", "seen_id", "rssi"],
        (
            [r.subject_id, r.timestamp, r.seen_id, r.rssi]
            for s in dataset.subjects
            for r in dataset.bluetooth.get(s, ())
        ),
    )
    write(
        "weather",
        ["date", "mean_temperature", "pressure", "precipitation", "humidity", "visibility", "wind_speed"],
        (
            [
                day.date.isoformat(),
                repr(day.mean_temperature),
                repr(day.pressure),
                repr(day.precipitation),
                repr(day.humidity),
                repr(day.visibility),
                repr(day.wind_speed),
            ]
            for day in sorted(dataset.weather.values(), key=lambda w: w.date)
        ),
    )
    write(
        "personality",
        ["subject_id", "extraversion", "neuroticism", "agreeableness", "conscientiousness", "openness"],
        (
            [
                p.subject_id,
                repr(p.extraversion),
                repr(p.neuroticism),
                repr(p.agreeableness),
                repr(p.conscientiousness),
                repr(p.openness),
            ]
            for p in (dataset.personality[s] for s in sorted(dataset.personality))
        ),
    )
    write(
        "stress",
        ["subject_id", "date", "score"],
        (
            [r.subject_id, r.date.isoformat(), r.score]
            for s in dataset.subjects
            for r in dataset.stress.get(s, ())
        ),
    )

    manifest = {
        "seed": config.seed if config is not None else None,
        "config": _config_dict(config) if config is not None else None,
        "row_counts": counts,
    }
    (directory / "cohort_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def _config_dict(config: CohortConfig) -> dict:
    raw = asdict(config)
    raw["start_date"] = config.start_date.isoformat()
    return raw


def config_from_dict(raw: dict) -> CohortConfig:
    data = dict(raw)
    if isinstance(data.get("start_date"), str):
        data["start_date"] = dt.date.fromisoformat(data["start_date"])
    return CohortConfig(**data)
