"""Feature ranking by forest importance and reduction to a fixed-size subset.

Selection is driven by mean decrease in Gini; the human-facing ranking table
is ordered by mean decrease in accuracy.  Both measures are emitted so either
view can be audited.  Ranking always happens on training rows only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import FeatureMatrix
from .forest import ForestConfig, fit_forest, importances

SELECT_KEY = "gini"
REPORT_KEY = "accuracy"
DEFAULT_TOP_K = 32


@dataclass(frozen=True)
class FeatureRank:
    name: str
    accuracy_per_class: tuple[float, ...]
    mean_decrease_accuracy: float
    mean_decrease_gini: float


@dataclass
class RankedFeatures:
    """Every candidate column with both importance measures.

    ``entries`` are ordered by the report key (mean decrease in accuracy when
    available); ``selection_order`` holds column names by the selection key
    (mean decrease in Gini), ties broken by name.
    """

    entries: list[FeatureRank]
    selection_order: list[str] = field(default_factory=list)
    classes: tuple[int, ...] = ()

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["Rank", "Feature", *map(str, self.classes), "MeanDecreaseAccuracy", "MeanDecreaseGini"]
            )
            for rank, e in enumerate(self.entries, start=1):
                writer.writerow(
                    [
                        rank,
                        e.name,
                        *(repr(v) for v in e.accuracy_per_class),
                        repr(e.mean_decrease_accuracy),
                        repr(e.mean_decrease_gini),
                    ]
                )


@dataclass(frozen=True)
class SelectionConfig:
    top_k: int = DEFAULT_TOP_K
    forest: ForestConfig = ForestConfig()
    permutation_importance: bool = True  # pipelines select on Gini and may skip it


def rank_features(
    matrix: FeatureMatrix,
    train_rows: Sequence[int] | np.ndarray,
    config: SelectionConfig | None = None,
    label_scheme: str = "binary",
) -> RankedFeatures:
    """Fit a ranking forest on the training rows and score every column."""
    if config is None:
        config = SelectionConfig()
    train_rows = np.asarray(train_rows, dtype=np.int64)
    X = matrix.X[train_rows]
    y = matrix.labels(label_scheme)[train_rows]
    if np.unique(y).size < 2:
        raise ValueError("ranking requires at least two classes in the training rows")

    ranking_forest = fit_forest(X, y, config.forest, columns=matrix.columns)
    report = importances(ranking_forest, X, y, permutation=config.permutation_importance)

    p = len(matrix.columns)
    mda = report.accuracy if report.accuracy is not None else np.full(p, float("nan"))
    per_class = (
        report.accuracy_per_class
        if report.accuracy_per_class is not None
        else np.full((ranking_forest.classes.size, p), float("nan"))
    )
    entries = [
        FeatureRank(
            name=matrix.columns[i],
            accuracy_per_class=tuple(float(v) for v in per_class[:, i]),
            mean_decrease_accuracy=float(mda[i]),
            mean_decrease_gini=float(report.gini[i]),
        )
        for i in range(p)
    ]
    report_key = (
        (lambda e: (-e.mean_decrease_accuracy, e.name))
        if config.permutation_importance
        else (lambda e: (-e.mean_decrease_gini, e.name))
    )
    entries.sort(key=report_key)
    selection_order = sorted(entries, key=lambda e: (-e.mean_decrease_gini, e.name))
    return RankedFeatures(
        entries=entries,
        selection_order=[e.name for e in selection_order],
        classes=tuple(int(c) for c in ranking_forest.classes),
    )


def select_top(ranked: RankedFeatures, k: int = DEFAULT_TOP_K) -> list[str]:
    """Top-k column names by the selection key (deterministic name tie-break)."""
    if k <= 0:
        raise ValueError("k must be positive")
    if k > len(ranked.selection_order):
        raise ValueError(f"k={k} exceeds the {len(ranked.selection_order)} ranked columns")
    return ranked.selection_order[:k]
