from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from stresslens.aggregate import FeatureMatrix, normalize_fit_transform
from stresslens.forest import ForestConfig
from stresslens.selection import SelectionConfig, rank_features, select_top


def signal_matrix(n=400, n_signal=3, n_noise=9, seed=0, duplicate_first=False):
    rng = np.random.default_rng(seed)
    signal = rng.normal(size=(n, n_signal))
    noise = rng.normal(size=(n, n_noise))
    logit = signal @ np.linspace(1.6, 0.8, n_signal) + 0.5 * rng.normal(size=n)
    y = (logit > 0).astype(np.int64)
    blocks = [signal, noise]
    names = [f"call.Signal{i}" for i in range(n_signal)] + [
        f"call.Noise{i}" for i in range(n_noise)
    ]
    if duplicate_first:
        blocks.append(signal[:, :1])
        names.append("call.SignalCopy0")
    X = np.hstack(blocks)
    half = n // 2
    return FeatureMatrix(
        columns=tuple(names),
        X=X,
        subject_ids=tuple(f"s{i % 20}" for i in range(n)),
        dates=tuple(dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(n)),
        y_binary=y,
        y_ternary=np.where(y == 1, 1, -1),
    )


CFG = SelectionConfig(top_k=4, forest=ForestConfig(n_trees=40, seed=1))


def test_every_column_is_scored_with_both_measures():
    matrix = signal_matrix()
    ranked = rank_features(matrix, np.arange(matrix.n_rows), CFG)
    assert {e.name for e in ranked.entries} == set(matrix.columns)
    for entry in ranked.entries:
        assert np.isfinite(entry.mean_decrease_gini)
        assert np.isfinite(entry.mean_decrease_accuracy)
        assert len(entry.accuracy_per_class) == 2


def test_signal_columns_rank_above_median():
    matrix = signal_matrix()
    ranked = rank_features(matrix, np.arange(matrix.n_rows), CFG)
    median_rank = len(ranked.selection_order) / 2
    for name in ("call.Signal0", "call.Signal1", "call.Signal2"):
        assert ranked.selection_order.index(name) < median_rank


def test_selection_uses_training_rows_only():
    matrix = signal_matrix()
    train = np.arange(0, 300)
    full = rank_features(matrix, train, CFG)
    truncated = rank_features(matrix.take_rows(train), np.arange(300), CFG)
    assert full.selection_order == truncated.selection_order
    assert [e.name for e in full.entries] == [e.name for e in truncated.entries]


def test_duplicated_column_never_raises_the_original():
    base = signal_matrix()
    doubled = signal_matrix(duplicate_first=True)
    rows = np.arange(base.n_rows)
    rank_without = rank_features(base, rows, CFG).selection_order.index("call.Signal0")
    rank_with = rank_features(doubled, rows, CFG).selection_order.index("call.Signal0")
    assert rank_with >= rank_without


def test_select_top_sizes_and_prefix_monotonicity():
    matrix = signal_matrix()
    ranked = rank_features(matrix, np.arange(matrix.n_rows), CFG)
    top4 = select_top(ranked, 4)
    assert len(top4) == 4
    assert select_top(ranked, len(matrix.columns)) == ranked.selection_order
    for k in range(1, len(matrix.columns)):
        assert set(select_top(ranked, k)) <= set(select_top(ranked, k + 1))


def test_importance_ties_resolve_lexicographically():
    # two constant columns are never used: identical zero importance
    rng = np.random.default_rng(3)
    X = np.hstack(
        [
            rng.normal(size=(200, 1)),
            np.zeros((200, 1)),
            np.zeros((200, 1)),
        ]
    )
    y = (X[:, 0] > 0).astype(np.int64)
    matrix = FeatureMatrix(
        columns=("call.A", "call.ZTie", "call.BTie"),
        X=X,
        subject_ids=tuple(f"s{i % 10}" for i in range(200)),
        dates=tuple(dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(200)),
        y_binary=y,
        y_ternary=np.where(y == 1, 1, -1),
    )
    ranked = rank_features(matrix, np.arange(200), CFG)
    assert ranked.selection_order[1:] == ["call.BTie", "call.ZTie"]


def test_degenerate_inputs_rejected():
    matrix = signal_matrix()
    ranked = rank_features(matrix, np.arange(matrix.n_rows), CFG)
    with pytest.raises(ValueError):
        select_top(ranked, 0)
    with pytest.raises(ValueError):
        select_top(ranked, len(matrix.columns) + 1)
    single = signal_matrix()
    single.y_binary[:] = 0
    with pytest.raises(ValueError, match="two classes"):
        rank_features(single, np.arange(single.n_rows), CFG)


def test_ranking_table_csv_shape(tmp_path):
    matrix = signal_matrix()
    ranked = rank_features(matrix, np.arange(matrix.n_rows), CFG)
    path = tmp_path / "ranked.csv"
    ranked.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "Rank,Feature,0,1,MeanDecreaseAccuracy,MeanDecreaseGini"
    assert len(lines) == len(matrix.columns) + 1
    assert lines[1].startswith("1,")
