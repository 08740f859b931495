"""Candidate feature matrix: stat expansions, trailing windows, normalization.

The matrix is built from three expansions plus context passthrough:

  (a) every daily scalar as its own column,
  (b) a stat-set expansion of every intra-day sample set,
  (c) trailing 2- and 3-day window stats of every daily scalar,
  (d) weather and personality scalars.

Column names follow ``family.BasicName[.Stat][.W<n>]``; one sample set
(``bluetooth.TimeForWhichIdSeen``) fuses the stat into the basic name
(``bluetooth.Q95TimeForWhichIdSeen``) to keep the established spelling.
Quantiles use the nearest-rank rule (1-based index ``ceil(q * n)``) so
results are identical across platforms.  Normalization is a per-column
z-score fitted on training rows only, with train-median imputation of NaNs.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .features import DailyBasicFeatures, MISSING, context_features, label_stress
from .ingest import SubjectDataset

QUANTILE_LEVELS = (0.50, 0.68, 0.75, 0.90, 0.95, 0.99)
QUANTILE_NAMES = tuple(f"Q{int(q * 100):02d}" for q in QUANTILE_LEVELS)
STAT_NAMES = ("Mean", "Median", "Min", "Max", "Variance", "Std") + QUANTILE_NAMES

DEFAULT_WINDOWS = (2, 3)
DEFAULT_WINDOW_STATS = ("Mean", "Min", "Max", "Variance")

# sample sets whose stat fuses into the basic name instead of a dotted suffix
FUSED_STAT_SAMPLES = ("bluetooth.TimeForWhichIdSeen",)


class StatSet(NamedTuple):
    mean: float
    median: float
    minimum: float
    maximum: float
    variance: float
    std: float
    quantiles: tuple[float, ...]  # aligned with QUANTILE_LEVELS

    def value(self, stat: str) -> float:
        if stat in QUANTILE_NAMES:
            return self.quantiles[QUANTILE_NAMES.index(stat)]
        return {
            "Mean": self.mean,
            "Median": self.median,
            "Min": self.minimum,
            "Max": self.maximum,
            "Variance": self.variance,
            "Std": self.std,
        }[stat]


_EMPTY_STATS = StatSet(
    MISSING, MISSING, MISSING, MISSING, MISSING, MISSING, (MISSING,) * len(QUANTILE_LEVELS)
)


def nearest_rank_quantile(ordered: Sequence[float], q: float) -> float:
    """Nearest-rank quantile over pre-sorted values: element ceil(q*n), 1-based."""
    n = len(ordered)
    if n == 0:
        raise ValueError("quantile of empty sample")
    rank = math.ceil(q * n)
    return ordered[max(rank, 1) - 1]


def second_order(samples: Iterable[float]) -> StatSet:
    """Summary statistics of one sample set; empty input yields all-NaN."""
    values = sorted(v for v in samples if not math.isnan(v))
    n = len(values)
    if n == 0:
        return _EMPTY_STATS
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    mid = n // 2
    median = values[mid] if n % 2 else (values[mid - 1] + values[mid]) / 2.0
    return StatSet(
        mean=mean,
        median=median,
        minimum=values[0],
        maximum=values[-1],
        variance=variance,
        std=math.sqrt(variance),
        quantiles=tuple(nearest_rank_quantile(values, q) for q in QUANTILE_LEVELS),
    )


def windowed(
    series: Mapping[dt.date, float], window_days: int
) -> dict[dt.date, StatSet]:
    """Trailing-window stats per day over {t-w+1 .. t}, restricted to days
    present in the series; NaN entries are excluded before the stats."""
    if window_days < 1:
        raise ValueError("window must span at least one day")
    out: dict[dt.date, StatSet] = {}
    for day in series:
        window = [
            series[d]
            for off in range(window_days)
            if (d := day - dt.timedelta(days=off)) in series
        ]
        out[day] = second_order(window)
    return out


@dataclass
class AssembleConfig:
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    window_stats: tuple[str, ...] = DEFAULT_WINDOW_STATS
    sample_stats: tuple[str, ...] = STAT_NAMES

    def __post_init__(self) -> None:
        for stat in tuple(self.window_stats) + tuple(self.sample_stats):
            if stat not in STAT_NAMES:
                raise ValueError(f"unknown stat name {stat!r}")


def _sample_column(base: str, stat: str) -> str:
    if base in FUSED_STAT_SAMPLES:
        family, rest = base.split(".", 1)
        return f"{family}.{stat}{rest}"
    return f"{base}.{stat}"


@dataclass
class FeatureMatrix:
    """Named feature columns by labeled subject-day rows.

    ``center``/``scale``/``fill`` are set once the matrix has been normalized
    (fitted on training rows only) and are None on a raw matrix.
    """

    columns: tuple[str, ...]
    X: np.ndarray
    subject_ids: tuple[str, ...]
    dates: tuple[dt.date, ...]
    y_binary: np.ndarray | None
    y_ternary: np.ndarray | None
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    fill: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")
        if self.X.shape != (len(self.subject_ids), len(self.columns)):
            raise ValueError("matrix shape does not match row/column metadata")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def labels(self, scheme: str) -> np.ndarray:
        y = self.y_binary if scheme == "binary" else self.y_ternary
        if y is None:
            raise ValueError(f"matrix carries no {scheme} labels")
        return y

    def restrict_columns(self, names: Sequence[str]) -> "FeatureMatrix":
        index = {c: i for i, c in enumerate(self.columns)}
        missing = [n for n in names if n not in index]
        if missing:
            raise KeyError(f"unknown columns: {missing[:5]}")
        cols = [index[n] for n in names]
        return FeatureMatrix(
            columns=tuple(names),
            X=self.X[:, cols].copy(),
            subject_ids=self.subject_ids,
            dates=self.dates,
            y_binary=self.y_binary,
            y_ternary=self.y_ternary,
            center=None if self.center is None else self.center[cols].copy(),
            scale=None if self.scale is None else self.scale[cols].copy(),
            fill=None if self.fill is None else self.fill[cols].copy(),
        )

    def take_rows(self, rows: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            columns=self.columns,
            X=self.X[rows],
            subject_ids=tuple(self.subject_ids[i] for i in rows),
            dates=tuple(self.dates[i] for i in rows),
            y_binary=None if self.y_binary is None else self.y_binary[rows],
            y_ternary=None if self.y_ternary is None else self.y_ternary[rows],
            center=self.center,
            scale=self.scale,
            fill=self.fill,
        )

    def to_csv(self, path: str | Path, label_scheme: str = "binary") -> None:
        y = self.labels(label_scheme)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject_id", "date", "label", *self.columns])
            for i in range(self.n_rows):
                writer.writerow(
                    [
                        self.subject_ids[i],
                        self.dates[i].isoformat(),
                        int(y[i]),
                        *(repr(float(v)) for v in self.X[i]),
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path, label_scheme: str = "binary") -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["subject_id", "date", "label"]:
                raise ValueError(f"{path}: not a feature matrix file")
            columns = tuple(header[3:])
            subjects: list[str] = []
            dates: list[dt.date] = []
            labels: list[int] = []
            rows: list[list[float]] = []
            for row in reader:
                subjects.append(row[0])
                dates.append(dt.date.fromisoformat(row[1]))
                labels.append(int(row[2]))
                rows.append([float(v) for v in row[3:]])
        y = np.asarray(labels, dtype=np.int64)
        return cls(
            columns=columns,
            X=np.asarray(rows, dtype=np.float64).reshape(len(subjects), len(columns)),
            subject_ids=tuple(subjects),
            dates=tuple(dates),
            y_binary=y if label_scheme == "binary" else None,
            y_ternary=y if label_scheme == "ternary" else None,
        )


@dataclass
class AssembleReport:
    n_rows: int = 0
    n_columns: int = 0
    dropped_rows: list[tuple[str, str, str]] = field(default_factory=list)  # subject, date, why

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_columns": self.n_columns,
            "dropped_rows": [list(t) for t in self.dropped_rows],
        }


def column_catalog(
    scalar_names: Sequence[str],
    sample_names: Sequence[str],
    context_names: Sequence[str],
    config: AssembleConfig,
) -> list[str]:
    """Full sorted candidate-column list implied by the basic feature names."""
    names: set[str] = set(scalar_names) | set(context_names)
    for base in sample_names:
        names.update(_sample_column(base, stat) for stat in config.sample_stats)
    for scalar in scalar_names:
        for w in config.windows:
            names.update(f"{scalar}.{stat}.W{w}" for stat in config.window_stats)
    return sorted(names)


def assemble(
    daily: Sequence[DailyBasicFeatures],
    dataset: SubjectDataset,
    config: AssembleConfig | None = None,
) -> tuple[FeatureMatrix, AssembleReport]:
    """Build the labeled candidate matrix from per-day basics plus context.

    Rows are emitted for every subject-day carrying a stress report; a labeled
    day whose context (weather date or subject traits) is missing is dropped
    and recorded in the report.  Unlabeled days still feed trailing windows.
    """
    if config is None:
        config = AssembleConfig()
    if not daily:
        raise ValueError("no daily features to assemble")

    scalar_names = sorted({name for d in daily for name in d.scalars})
    sample_names = sorted({name for d in daily for name in d.samples})
    if dataset.weather and dataset.personality:
        context_names = sorted(
            context_features(
                next(iter(dataset.weather.values())),
                next(iter(dataset.personality.values())),
            )
        )
    else:
        context_names = []
    columns = column_catalog(scalar_names, sample_names, context_names, config)
    col_index = {name: i for i, name in enumerate(columns)}

    by_subject: dict[str, list[DailyBasicFeatures]] = {}
    for d in daily:
        by_subject.setdefault(d.subject_id, []).append(d)

    report = AssembleReport(n_columns=len(columns))
    rows: list[np.ndarray] = []
    subjects: list[str] = []
    dates: list[dt.date] = []
    y_bin: list[int] = []
    y_ter: list[int] = []

    for subject in sorted(by_subject):
        days = sorted(by_subject[subject], key=lambda d: d.date)
        labeled = {
            r.date: r.score
            for r in dataset.stress.get(subject, ())
        }
        if not labeled:
            continue
        # trailing-window stats for every scalar series of this subject
        window_values: dict[tuple[str, int], dict[dt.date, StatSet]] = {}
        for scalar in scalar_names:
            series = {d.date: d.scalars.get(scalar, MISSING) for d in days}
            for w in config.windows:
                window_values[(scalar, w)] = windowed(series, w)

        profile = dataset.personality.get(subject)
        for d in days:
            if d.date not in labeled:
                continue
            weather_day = dataset.weather.get(d.date)
            if weather_day is None:
                report.dropped_rows.append((subject, d.date.isoformat(), "no weather"))
                continue
            if profile is None:
                report.dropped_rows.append((subject, d.date.isoformat(), "no traits"))
                continue
            vec = np.full(len(columns), np.nan)
            for name, value in d.scalars.items():
                vec[col_index[name]] = value
            for base, values in d.samples.items():
                stats = second_order(values)
                for stat in config.sample_stats:
                    vec[col_index[_sample_column(base, stat)]] = stats.value(stat)
            for scalar in scalar_names:
                for w in config.windows:
                    stats = window_values[(scalar, w)][d.date]
                    for stat in config.window_stats:
                        vec[col_index[f"{scalar}.{stat}.W{w}"]] = stats.value(stat)
            for name, value in context_features(weather_day, profile).items():
                vec[col_index[name]] = value
            rows.append(vec)
            subjects.append(subject)
            dates.append(d.date)
            score = labeled[d.date]
            y_bin.append(label_stress(score, "binary"))
            y_ter.append(label_stress(score, "ternary"))

    if not rows:
        raise ValueError("no labeled rows could be assembled")
    report.n_rows = len(rows)
    matrix = FeatureMatrix(
        columns=tuple(columns),
        X=np.vstack(rows),
        subject_ids=tuple(subjects),
        dates=tuple(dates),
        y_binary=np.asarray(y_bin, dtype=np.int64),
        y_ternary=np.asarray(y_ter, dtype=np.int64),
    )
    return matrix, report


def normalize_fit_transform(
    matrix: FeatureMatrix, train_rows: Sequence[int] | np.ndarray
) -> FeatureMatrix:
    """Impute NaNs with train medians, then z-score with train mean/std.

    Parameters come from the training rows only; zero-variance columns map
    to all zeros.  The returned matrix keeps the fitted parameters.
    """
    train_rows = np.asarray(train_rows, dtype=np.int64)
    if train_rows.size == 0:
        raise ValueError("train_rows must be nonempty")
    train = matrix.X[train_rows]

    with np.errstate(all="ignore"):
        fill = np.nanmedian(train, axis=0)
    fill = np.where(np.isnan(fill), 0.0, fill)

    X = matrix.X.copy()
    nan_mask = np.isnan(X)
    X[nan_mask] = np.take(fill, np.nonzero(nan_mask)[1])

    train_imputed = X[train_rows]
    center = train_imputed.mean(axis=0)
    scale = train_imputed.std(axis=0)
    constant = scale == 0.0
    safe_scale = np.where(constant, 1.0, scale)
    X = (X - center) / safe_scale
    X[:, constant] = 0.0

    return FeatureMatrix(
        columns=matrix.columns,
        X=X,
        subject_ids=matrix.subject_ids,
        dates=matrix.dates,
        y_binary=matrix.y_binary,
        y_ternary=matrix.y_ternary,
        center=center,
        scale=scale,
        fill=fill,
    )
