"""Metric suite, subject-disjoint splitting schemes and evaluation harnesses.

The positive class throughout is "stressed" (label 1).  Confidence intervals
on accuracy are exact Clopper-Pearson; the accuracy-vs-NIR significance test
is a one-sided exact binomial tail.  All splitting schemes assign whole
subjects to one side, so no subject's rows ever straddle train and test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.stats import beta, binom

from .aggregate import FeatureMatrix, normalize_fit_transform
from .forest import ForestConfig, fit_forest, predict
from .selection import SelectionConfig, rank_features, select_top

POSITIVE_LABEL = 1
SCHEMES = ("random_subject_80_20", "kfold_10", "loso")

# ablation rows: model name -> feature family groups included
FAMILY_GROUPS = {
    "personality": ("personality",),
    "weather": ("weather",),
    "phone": ("call", "sms", "callsms", "bluetooth"),
}
ABLATION_ROWS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("all", ("personality", "weather", "phone")),
    ("baseline", ()),
    ("weather", ("weather",)),
    ("personality", ("personality",)),
    ("phone", ("phone",)),
    ("personality+weather", ("personality", "weather")),
    ("personality+phone", ("personality", "phone")),
    ("weather+phone", ("weather", "phone")),
)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "ConfusionMatrix":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        pos = y_true == POSITIVE_LABEL
        pred_pos = y_pred == POSITIVE_LABEL
        return cls(
            tp=int(np.sum(pos & pred_pos)),
            fp=int(np.sum(~pos & pred_pos)),
            tn=int(np.sum(~pos & ~pred_pos)),
            fn=int(np.sum(pos & ~pred_pos)),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    kappa: float
    sensitivity: float
    specificity: float
    f1: float
    ci_low: float
    ci_high: float
    nir: float
    p_value: float
    n_rows: int
    confusion: tuple[tuple[int, ...], ...]  # rows = true class, cols = predicted
    classes: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "kappa": self.kappa,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f1": self.f1,
            "ci95": [self.ci_low, self.ci_high],
            "nir": self.nir,
            "p_value_acc_gt_nir": self.p_value,
            "n_rows": self.n_rows,
            "confusion": [list(r) for r in self.confusion],
            "classes": list(self.classes),
        }


def clopper_pearson(successes: int, trials: int, alpha: float = 0.05) -> tuple[float, float]:
    """Exact binomial confidence interval for a proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    low = 0.0 if successes == 0 else float(beta.ppf(alpha / 2, successes, trials - successes + 1))
    high = (
        1.0
        if successes == trials
        else float(beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    )
    return low, high


def nir_p_value(correct: int, trials: int, nir: float) -> float:
    """One-sided exact binomial tail P[X >= correct] at success rate ``nir``."""
    return float(binom.sf(correct - 1, trials, nir))


def _kappa(table: np.ndarray) -> float:
    n = table.sum()
    p_observed = np.trace(table) / n
    p_expected = float(np.sum(table.sum(axis=1) * table.sum(axis=0))) / (n * n)
    if p_expected == 1.0:
        return 0.0  # degenerate: constant prediction on constant truth
    return float((p_observed - p_expected) / (1.0 - p_expected))


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Full binary metric suite from a confusion matrix."""
    n = cm.total
    if n < 1:
        raise ValueError("empty confusion matrix")
    correct = cm.tp + cm.tn
    accuracy = correct / n
    table = np.array([[cm.tn, cm.fp], [cm.fn, cm.tp]], dtype=np.float64)
    kappa = _kappa(table)
    sensitivity = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else float("nan")
    specificity = cm.tn / (cm.tn + cm.fp) if cm.tn + cm.fp else float("nan")
    f1 = 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn) if 2 * cm.tp + cm.fp + cm.fn else float("nan")
    ci_low, ci_high = clopper_pearson(correct, n)
    nir = max(cm.tp + cm.fn, cm.tn + cm.fp) / n
    return MetricsReport(
        accuracy=accuracy,
        kappa=kappa,
        sensitivity=sensitivity,
        specificity=specificity,
        f1=f1,
        ci_low=ci_low,
        ci_high=ci_high,
        nir=nir,
        p_value=nir_p_value(correct, n, nir),
        n_rows=n,
        confusion=((cm.tn, cm.fp), (cm.fn, cm.tp)),
        classes=(0, 1),
    )


def multiclass_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    """Accuracy and kappa for 3+ classes; the binary-only rates are NaN."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = np.unique(np.concatenate([y_true, y_pred]))
    index = {c: i for i, c in enumerate(classes.tolist())}
    table = np.zeros((classes.size, classes.size), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        table[index[t], index[p]] += 1
    n = int(table.sum())
    correct = int(np.trace(table))
    prevalences = table.sum(axis=1) / n
    nir = float(prevalences.max())
    ci_low, ci_high = clopper_pearson(correct, n)
    return MetricsReport(
        accuracy=correct / n,
        kappa=_kappa(table.astype(np.float64)),
        sensitivity=float("nan"),
        specificity=float("nan"),
        f1=float("nan"),
        ci_low=ci_low,
        ci_high=ci_high,
        nir=nir,
        p_value=nir_p_value(correct, n, nir),
        n_rows=n,
        confusion=tuple(tuple(int(v) for v in row) for row in table),
        classes=tuple(int(c) for c in classes),
    )


def metrics_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    classes = np.unique(np.asarray(y_true))
    if classes.size <= 2 and set(classes.tolist()) <= {0, 1}:
        return metrics(ConfusionMatrix.from_predictions(y_true, y_pred))
    return multiclass_metrics(y_true, y_pred)


@dataclass
class SplitPlan:
    """Subject-disjoint partition of rows into folds.

    ``assignments[i]`` is the fold holding row i on its test side.  For the
    80/20 scheme there is a single fold (the 20% test side).  ``bootstrap``
    holds per-fold resampled training row indices for the 10-fold scheme.
    """

    scheme: str
    seed: int
    n_folds: int
    assignments: np.ndarray
    bootstrap: dict[int, np.ndarray] = field(default_factory=dict)

    def folds(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for fold in range(self.n_folds):
            test_idx = np.nonzero(self.assignments == fold)[0]
            if fold in self.bootstrap:
                train_idx = self.bootstrap[fold]
            else:
                train_idx = np.nonzero(self.assignments != fold)[0]
            yield train_idx, test_idx


def make_split(
    subject_ids: Sequence[str],
    scheme: str,
    seed: int = 0,
    n_folds: int = 10,
    train_fraction: float = 0.8,
) -> SplitPlan:
    """Build a subject-disjoint split plan over the given per-row subjects."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    subject_ids = list(subject_ids)
    n = len(subject_ids)
    subjects = sorted(set(subject_ids))
    rows_of = {s: [] for s in subjects}
    for i, s in enumerate(subject_ids):
        rows_of[s].append(i)
    if len(subjects) < 2:
        raise ValueError("subject-disjoint splitting needs at least 2 subjects")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    assignments = np.empty(n, dtype=np.int64)

    if scheme == "random_subject_80_20":
        # whole subjects join the train side until it holds ~train_fraction of rows;
        # train rows carry fold id -1 (they are never on a test side)
        order = [subjects[i] for i in rng.permutation(len(subjects))]
        target = train_fraction * n
        train_subjects: set[str] = set()
        taken = 0
        pos = 0
        while pos < len(order) and taken < target:
            train_subjects.add(order[pos])
            taken += len(rows_of[order[pos]])
            pos += 1
        if pos == len(order):  # keep the test side nonempty
            train_subjects.discard(order[-1])
        for i, s in enumerate(subject_ids):
            assignments[i] = -1 if s in train_subjects else 0
        return SplitPlan(scheme=scheme, seed=seed, n_folds=1, assignments=assignments)

    if scheme == "kfold_10":
        if len(subjects) < n_folds:
            raise ValueError(f"kfold needs at least {n_folds} subjects, got {len(subjects)}")
        order = [subjects[i] for i in rng.permutation(len(subjects))]
        for pos, s in enumerate(order):
            assignments[rows_of[s]] = pos % n_folds
        bootstrap: dict[int, np.ndarray] = {}
        for fold, child in enumerate(np.random.SeedSequence(seed).spawn(n_folds)):
            train_idx = np.nonzero(assignments != fold)[0]
            gen = np.random.Generator(np.random.PCG64(child))
            draws = gen.integers(0, train_idx.size, size=train_idx.size)
            bootstrap[fold] = train_idx[draws]
        return SplitPlan(
            scheme=scheme, seed=seed, n_folds=n_folds, assignments=assignments, bootstrap=bootstrap
        )

    # loso: one fold per subject, in sorted-subject order
    for fold, s in enumerate(subjects):
        assignments[rows_of[s]] = fold
    return SplitPlan(scheme=scheme, seed=seed, n_folds=len(subjects), assignments=assignments)


@dataclass(frozen=True)
class PipelineConfig:
    """Per-fold modeling pipeline: normalize, rank, select, fit, evaluate."""

    select_k: int = 32
    forest: ForestConfig = ForestConfig()
    label_scheme: str = "binary"
    permutation_importance: bool = False  # selection runs on Gini; skip the slow measure


@dataclass
class FoldOutcome:
    fold: int
    report: MetricsReport
    y_true: np.ndarray
    y_pred: np.ndarray
    selected: tuple[str, ...]


@dataclass
class CVResult:
    fold_outcomes: list[FoldOutcome]
    failed_folds: list[tuple[int, str]]
    summary: dict[str, dict[str, float]]
    pooled: MetricsReport


def run_fold(
    matrix: FeatureMatrix,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    config: PipelineConfig,
) -> tuple[MetricsReport, np.ndarray, np.ndarray, tuple[str, ...]]:
    """One full train/evaluate cycle; everything is fitted on the train side."""
    normalized = normalize_fit_transform(matrix, train_idx)
    selection = SelectionConfig(
        top_k=config.select_k,
        forest=config.forest,
        permutation_importance=config.permutation_importance,
    )
    ranked = rank_features(normalized, train_idx, selection, config.label_scheme)
    k = min(config.select_k, len(normalized.columns))
    chosen = select_top(ranked, k)
    reduced = normalized.restrict_columns(chosen)
    y = reduced.labels(config.label_scheme)
    model = fit_forest(reduced.X[train_idx], y[train_idx], config.forest, columns=chosen)
    y_pred, _fractions = predict(model, reduced.X[test_idx])
    y_true = y[test_idx]
    return metrics_from_predictions(y_true, y_pred), y_true, y_pred, tuple(chosen)


def _six_stats(values: Sequence[float]) -> dict[str, float]:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    median = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    q = lambda frac: ordered[max(math.ceil(frac * n), 1) - 1]
    return {
        "min": ordered[0],
        "q1": q(0.25),
        "median": median,
        "mean": sum(ordered) / n,
        "q3": q(0.75),
        "max": ordered[-1],
    }


def cross_validate(
    matrix: FeatureMatrix, plan: SplitPlan, config: PipelineConfig | None = None
) -> CVResult:
    """Refit the whole pipeline per fold and summarize the fold metrics."""
    if config is None:
        config = PipelineConfig()
    outcomes: list[FoldOutcome] = []
    failures: list[tuple[int, str]] = []
    for fold, (train_idx, test_idx) in enumerate(plan.folds()):
        y_train = matrix.labels(config.label_scheme)[train_idx]
        if np.unique(y_train).size < 2:
            failures.append((fold, "single class in training rows"))
            continue
        report, y_true, y_pred, selected = run_fold(matrix, train_idx, test_idx, config)
        outcomes.append(FoldOutcome(fold, report, y_true, y_pred, selected))
    if not outcomes:
        raise ValueError("every fold failed")
    summary = {
        "accuracy": _six_stats([o.report.accuracy for o in outcomes]),
        "kappa": _six_stats([o.report.kappa for o in outcomes]),
    }
    pooled = metrics_from_predictions(
        np.concatenate([o.y_true for o in outcomes]),
        np.concatenate([o.y_pred for o in outcomes]),
    )
    return CVResult(fold_outcomes=outcomes, failed_folds=failures, summary=summary, pooled=pooled)


def column_family_group(column: str) -> str:
    prefix = column.split(".", 1)[0]
    for group, prefixes in FAMILY_GROUPS.items():
        if prefix in prefixes:
            return group
    raise ValueError(f"column {column!r} has no known feature family")


def _majority_baseline(
    matrix: FeatureMatrix, plan: SplitPlan, label_scheme: str
) -> tuple[MetricsReport, np.ndarray, np.ndarray]:
    y = matrix.labels(label_scheme)
    trues, preds = [], []
    for train_idx, test_idx in plan.folds():
        classes, counts = np.unique(y[train_idx], return_counts=True)
        majority = classes[np.argmax(counts)]  # ties resolve to the smaller label
        trues.append(y[test_idx])
        preds.append(np.full(test_idx.size, majority, dtype=y.dtype))
    y_true = np.concatenate(trues)
    y_pred = np.concatenate(preds)
    return metrics_from_predictions(y_true, y_pred), y_true, y_pred


@dataclass
class AblationResult:
    rows: dict[str, MetricsReport]
    order: tuple[str, ...] = tuple(name for name, _groups in ABLATION_ROWS)


def ablation_suite(
    matrix: FeatureMatrix, plan: SplitPlan, config: PipelineConfig | None = None
) -> AblationResult:
    """Re-run the pipeline once per feature-family restriction on one plan.

    Rows cover each single family, each pairwise union, the full set and the
    majority baseline; identical folds keep the rows comparable.
    """
    if config is None:
        config = PipelineConfig()
    groups_of_column = [column_family_group(c) for c in matrix.columns]
    rows: dict[str, MetricsReport] = {}
    for name, groups in ABLATION_ROWS:
        if name == "baseline":
            rows[name], _t, _p = _majority_baseline(matrix, plan, config.label_scheme)
            continue
        columns = [c for c, g in zip(matrix.columns, groups_of_column) if g in groups]
        if not columns:
            raise ValueError(f"feature family {name!r} selects no columns")
        restricted = matrix.restrict_columns(columns)
        trues, preds = [], []
        for train_idx, test_idx in plan.folds():
            report, y_true, y_pred, _sel = run_fold(restricted, train_idx, test_idx, config)
            trues.append(y_true)
            preds.append(y_pred)
        rows[name] = metrics_from_predictions(np.concatenate(trues), np.concatenate(preds))
    return AblationResult(rows=rows)


def ternary_evaluate(
    matrix: FeatureMatrix, plan: SplitPlan, config: PipelineConfig | None = None
) -> MetricsReport:
    """Three-class variant; reports accuracy and kappa (rates are binary-only)."""
    if config is None:
        config = PipelineConfig()
    config = replace(config, label_scheme="ternary")
    trues, preds = [], []
    for train_idx, test_idx in plan.folds():
        y_train = matrix.labels("ternary")[train_idx]
        if np.unique(y_train).size < 3:
            raise ValueError("ternary evaluation needs all three classes in training rows")
        _report, y_true, y_pred, _sel = run_fold(matrix, train_idx, test_idx, config)
        trues.append(y_true)
        preds.append(y_pred)
    return multiclass_metrics(np.concatenate(trues), np.concatenate(preds))
