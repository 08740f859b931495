"""Random forest of CART trees with bagging, OOB estimates and importances.

Trees are grown greedily on Gini impurity with per-node feature subsampling
(``mtry`` drawn without replacement) and split thresholds at midpoints of
consecutive distinct sorted values.  Growth stops at purity, at nodes too
small to split while keeping ``min_leaf`` samples per child, or when no
split has strictly positive gain.

The hot loops are compiled with numba; randomness inside them comes from an
explicit splitmix64 stream so that a fixed seed reproduces the forest bit
for bit regardless of thread count.  Per-tree bootstrap draws and
permutation-importance shuffles come from numpy streams spawned off the
master seed.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

FOREST_FORMAT = "stresslens-forest"
FOREST_FORMAT_VERSION = 1


def gini_impurity(class_counts: Sequence[int]) -> float:
    """Gini impurity 1 - sum((c_i / total)^2) of a class-count vector."""
    counts = [int(c) for c in class_counts]
    if any(c < 0 for c in counts):
        raise ValueError("class counts must be nonnegative")
    total = sum(counts)
    if total == 0:
        raise ValueError("all-zero class counts")
    return 1.0 - sum((c / total) ** 2 for c in counts)


@njit(cache=True, nogil=True, inline="always")
def _next_u64(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _rand_below(state, n):
    # Lemire multiply-shift; n is far below 2**32 here
    return np.int64((_next_u64(state) >> np.uint64(32)) * np.uint64(n) >> np.uint64(32))


@njit(cache=True, nogil=True)
def _co_sort(vals, labs, lo, hi):
    """Iterative quicksort of vals[lo:hi] carrying labs along.

    Equal-value regions may land in any order; split candidates only exist
    between distinct values, so the result of the split scan is unaffected.
    """
    stack_lo = np.empty(64, dtype=np.int64)
    stack_hi = np.empty(64, dtype=np.int64)
    top = 0
    stack_lo[0] = lo
    stack_hi[0] = hi
    while top >= 0:
        lo = stack_lo[top]
        hi = stack_hi[top]
        top -= 1
        while hi - lo > 16:
            mid = (lo + hi) // 2
            a, b, c = vals[lo], vals[mid], vals[hi - 1]
            if a > b:
                a, b = b, a
            if b > c:
                b, c = c, b
            if a > b:
                a, b = b, a
            pivot = b
            i = lo
            j = hi - 1
            while True:
                while vals[i] < pivot:
                    i += 1
                while vals[j] > pivot:
                    j -= 1
                if i >= j:
                    break
                vals[i], vals[j] = vals[j], vals[i]
                labs[i], labs[j] = labs[j], labs[i]
                i += 1
                j -= 1
            # recurse into the smaller side first to bound the stack
            if j + 1 - lo < hi - (j + 1):
                top += 1
                stack_lo[top] = j + 1
                stack_hi[top] = hi
                hi = j + 1
            else:
                top += 1
                stack_lo[top] = lo
                stack_hi[top] = j + 1
                lo = j + 1
        for i in range(lo + 1, hi):
            v = vals[i]
            l = labs[i]
            j = i - 1
            while j >= lo and vals[j] > v:
                vals[j + 1] = vals[j]
                labs[j + 1] = labs[j]
                j -= 1
            vals[j + 1] = v
            labs[j + 1] = l


@njit(cache=True, nogil=True)
def _build_tree(
    X_T,
    y,
    inbag,
    n_classes,
    mtry,
    min_leaf,
    seed,
    node_feature,
    node_threshold,
    node_left,
    node_right,
    node_pred,
    node_counts,
    gini_acc,
):
    """Grow one tree in place into the preallocated node arrays.

    ``X_T`` is the feature-major (p, n) view so a node's column gathers stay
    inside one contiguous column.  Returns the number of nodes written.
    ``gini_acc`` accumulates, per feature, the impurity decrease of each
    split weighted by the node's share of the in-bag sample (so per tree
    they telescope to root impurity minus the weighted leaf impurity).
    """
    m_total = inbag.size
    p = X_T.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    idx = inbag.copy()
    perm = np.arange(p)
    vals = np.empty(m_total, dtype=np.float64)
    labs = np.empty(m_total, dtype=np.int64)
    left_buf = np.empty(m_total, dtype=np.int64)
    right_buf = np.empty(m_total, dtype=np.int64)
    counts = np.zeros(n_classes, dtype=np.int64)
    left_counts = np.zeros(n_classes, dtype=np.int64)
    inv = np.empty(m_total + 1, dtype=np.float64)
    inv[0] = 0.0
    for i in range(1, m_total + 1):
        inv[i] = 1.0 / i

    capacity = node_feature.size
    stack_node = np.empty(capacity, dtype=np.int64)
    stack_start = np.empty(capacity, dtype=np.int64)
    stack_end = np.empty(capacity, dtype=np.int64)

    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m_total

    while top >= 0:
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        top -= 1
        m = end - start

        counts[:] = 0
        for i in range(start, end):
            counts[y[idx[i]]] += 1
        best_class = 0
        parent_sq = 0.0
        for c in range(n_classes):
            parent_sq += counts[c] * counts[c]
            if counts[c] > counts[best_class]:
                best_class = c
        parent_sq *= inv[m]
        node_pred[node] = best_class
        for c in range(n_classes):
            node_counts[node, c] = counts[c]
        node_feature[node] = -1
        node_left[node] = -1
        node_right[node] = -1
        node_threshold[node] = 0.0

        pure = counts[best_class] == m
        if pure or m < 2 * min_leaf:
            continue

        best_sq = parent_sq
        best_feat = -1
        best_thr = 0.0
        for t in range(mtry):
            j = t + _rand_below(state, p - t)
            tmp = perm[t]
            perm[t] = perm[j]
            perm[j] = tmp
            f = perm[t]

            for i in range(m):
                row = idx[start + i]
                vals[i] = X_T[f, row]
                labs[i] = y[row]
            _co_sort(vals, labs, 0, m)
            if n_classes == 2:
                total1 = counts[1]
                lc1 = 0
                for pos in range(m - 1):
                    lc1 += labs[pos]
                    nl = pos + 1
                    if nl < min_leaf:
                        continue
                    nr = m - nl
                    if nr < min_leaf:
                        break
                    lo = vals[pos]
                    hi = vals[pos + 1]
                    if lo >= hi:
                        continue
                    lc0 = nl - lc1
                    rc1 = total1 - lc1
                    rc0 = nr - rc1
                    sq = (lc0 * lc0 + lc1 * lc1) * inv[nl] + (rc0 * rc0 + rc1 * rc1) * inv[nr]
                    if sq > best_sq:
                        best_sq = sq
                        best_feat = f
                        best_thr = 0.5 * (lo + hi)
            else:
                left_counts[:] = 0
                for pos in range(m - 1):
                    left_counts[labs[pos]] += 1
                    nl = pos + 1
                    if nl < min_leaf:
                        continue
                    nr = m - nl
                    if nr < min_leaf:
                        break
                    lo = vals[pos]
                    hi = vals[pos + 1]
                    if lo >= hi:
                        continue
                    sq = 0.0
                    for c in range(n_classes):
                        lc = left_counts[c]
                        rc = counts[c] - lc
                        sq += (lc * lc) * inv[nl] + (rc * rc) * inv[nr]
                    if sq > best_sq:
                        best_sq = sq
                        best_feat = f
                        best_thr = 0.5 * (lo + hi)

        if best_feat < 0:
            continue  # no strictly positive gain

        gini_acc[best_feat] += (best_sq - parent_sq) / m_total

        nl = 0
        nr = 0
        for i in range(start, end):
            if X_T[best_feat, idx[i]] <= best_thr:
                left_buf[nl] = idx[i]
                nl += 1
            else:
                right_buf[nr] = idx[i]
                nr += 1
        for i in range(nl):
            idx[start + i] = left_buf[i]
        for i in range(nr):
            idx[start + nl + i] = right_buf[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        node_feature[node] = best_feat
        node_threshold[node] = best_thr
        node_left[node] = left_id
        node_right[node] = right_id

        top += 1
        stack_node[top] = left_id
        stack_start[top] = start
        stack_end[top] = start + nl
        top += 1
        stack_node[top] = right_id
        stack_start[top] = start + nl
        stack_end[top] = end

    return n_nodes


@njit(cache=True, nogil=True)
def _predict_tree(node_feature, node_threshold, node_left, node_right, node_pred, X, out):
    for i in range(X.shape[0]):
        node = 0
        while node_feature[node] >= 0:
            if X[i, node_feature[node]] <= node_threshold[node]:
                node = node_left[node]
            else:
                node = node_right[node]
        out[i] = node_pred[node]


@njit(cache=True, nogil=True)
def _count_tree_hits(
    node_feature, node_threshold, node_left, node_right, node_pred, X, rows, y, feature, permuted
):
    """Correct predictions over ``rows`` with one column's values overridden."""
    hits = 0
    for k in range(rows.size):
        i = rows[k]
        node = 0
        while node_feature[node] >= 0:
            f = node_feature[node]
            v = permuted[k] if f == feature else X[i, f]
            if v <= node_threshold[node]:
                node = node_left[node]
            else:
                node = node_right[node]
        if node_pred[node] == y[i]:
            hits += 1
    return hits


MAX_TREES = 2048


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 112
    mtry: int | None = None  # default floor(sqrt(n_features))
    min_leaf: int = 5
    seed: int = 0
    n_threads: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.n_trees <= MAX_TREES:
            raise ValueError(f"n_trees must be in 1..{MAX_TREES}, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")

    def resolved_mtry(self, n_features: int) -> int:
        mtry = self.mtry if self.mtry is not None else int(math.sqrt(n_features))
        return max(1, min(mtry, n_features))


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    pred: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        _predict_tree(self.feature, self.threshold, self.left, self.right, self.pred, X, out)
        return out

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])


@dataclass
class Forest:
    config: ForestConfig
    classes: np.ndarray  # original label values, ascending
    n_features: int
    n_rows: int
    trees: list[Tree]
    inbag_counts: np.ndarray  # (n_trees, n_rows) bootstrap multiplicities
    gini_importance: np.ndarray  # (n_features,) mean decrease over trees
    oob_votes: np.ndarray  # (n_rows, n_classes) votes from trees where row is OOB
    columns: tuple[str, ...] | None = None


@dataclass
class MarginReport:
    """Per-row vote margins plus the OOB estimate of the generalization error."""

    margins: np.ndarray  # in [-1, 1]
    pe_star: float  # fraction of OOB-vote margins below zero
    oob_margins: np.ndarray


@dataclass
class ImportanceReport:
    gini: np.ndarray  # mean decrease in Gini per feature
    accuracy: np.ndarray | None = None  # mean decrease in OOB accuracy
    accuracy_per_class: np.ndarray | None = None  # (n_classes, n_features)
    accuracy_se: np.ndarray | None = None  # standard error of the mean over trees
    columns: tuple[str, ...] | None = None


@dataclass
class SingleTreeFit:
    """One CART tree grown directly on the given rows (no bootstrap)."""

    tree: Tree
    classes: np.ndarray
    gini_importance: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.classes[self.tree.predict(np.ascontiguousarray(X, dtype=np.float64))]


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    mtry: int | None = None,
    min_leaf: int = 5,
    seed: int = 0,
) -> SingleTreeFit:
    """Grow a single greedy CART tree on all rows of ``X``.

    Candidate features are re-drawn (``mtry`` without replacement) at every
    node; a fixed seed reproduces the tree exactly.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("need at least one row")
    X_T = np.ascontiguousarray(X.T)
    y = np.asarray(y)
    n, p = X.shape
    classes = np.unique(y)
    y_enc = np.searchsorted(classes, y).astype(np.int64)
    mtry = max(1, min(mtry if mtry is not None else int(math.sqrt(p)), p))

    capacity = 2 * n + 1
    feature = np.empty(capacity, dtype=np.int64)
    threshold = np.empty(capacity, dtype=np.float64)
    left = np.empty(capacity, dtype=np.int64)
    right = np.empty(capacity, dtype=np.int64)
    pred = np.empty(capacity, dtype=np.int64)
    counts = np.empty((capacity, classes.size), dtype=np.int64)
    gini_acc = np.zeros(p, dtype=np.float64)
    n_nodes = _build_tree(
        X_T,
        y_enc,
        np.arange(n, dtype=np.int64),
        classes.size,
        mtry,
        min_leaf,
        seed,
        feature,
        threshold,
        left,
        right,
        pred,
        counts,
        gini_acc,
    )
    return SingleTreeFit(
        tree=Tree(
            feature=feature[:n_nodes].copy(),
            threshold=threshold[:n_nodes].copy(),
            left=left[:n_nodes].copy(),
            right=right[:n_nodes].copy(),
            pred=pred[:n_nodes].copy(),
            counts=counts[:n_nodes].copy(),
        ),
        classes=classes,
        gini_importance=gini_acc,
    )


def _tree_streams(config: ForestConfig, n_rows: int):
    """Deterministic per-tree (bootstrap indices, builder seed) pairs."""
    children = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    out = []
    for child in children:
        gen = np.random.Generator(np.random.PCG64(child))
        inbag = gen.integers(0, n_rows, size=n_rows, dtype=np.int64)
        builder_seed = int(gen.integers(0, 2**63, dtype=np.int64))
        out.append((inbag, builder_seed))
    return out


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig | None = None,
    columns: Sequence[str] | None = None,
) -> Forest:
    """Fit a bagged forest; every tree trains on an n-sized bootstrap sample."""
    if config is None:
        config = ForestConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    X_T = np.ascontiguousarray(X.T)
    y = np.asarray(y)
    n, p = X.shape
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("training data contains a single class")
    y_enc = np.searchsorted(classes, y).astype(np.int64)
    mtry = config.resolved_mtry(p)

    streams = _tree_streams(config, n)
    inbag_counts = np.zeros((config.n_trees, n), dtype=np.int64)
    per_tree_gini = np.zeros((config.n_trees, p), dtype=np.float64)
    trees: list[Tree] = [None] * config.n_trees  # type: ignore[list-item]

    def build(k: int) -> None:
        inbag, builder_seed = streams[k]
        capacity = 2 * n + 1
        feature = np.empty(capacity, dtype=np.int64)
        threshold = np.empty(capacity, dtype=np.float64)
        left = np.empty(capacity, dtype=np.int64)
        right = np.empty(capacity, dtype=np.int64)
        pred = np.empty(capacity, dtype=np.int64)
        counts = np.empty((capacity, classes.size), dtype=np.int64)
        n_nodes = _build_tree(
            X_T,
            y_enc,
            inbag,
            classes.size,
            mtry,
            config.min_leaf,
            builder_seed,
            feature,
            threshold,
            left,
            right,
            pred,
            counts,
            per_tree_gini[k],
        )
        trees[k] = Tree(
            feature=feature[:n_nodes].copy(),
            threshold=threshold[:n_nodes].copy(),
            left=left[:n_nodes].copy(),
            right=right[:n_nodes].copy(),
            pred=pred[:n_nodes].copy(),
            counts=counts[:n_nodes].copy(),
        )
        inbag_counts[k] = np.bincount(inbag, minlength=n)

    if config.n_threads > 1:
        build(0)  # compile before the pool touches the kernels
        with ThreadPoolExecutor(max_workers=config.n_threads) as pool:
            list(pool.map(build, range(1, config.n_trees)))
    else:
        for k in range(config.n_trees):
            build(k)

    oob_votes = np.zeros((n, classes.size), dtype=np.int64)
    for k, tree in enumerate(trees):
        oob_rows = np.nonzero(inbag_counts[k] == 0)[0]
        if oob_rows.size:
            preds = tree.predict(X[oob_rows])
            np.add.at(oob_votes, (oob_rows, preds), 1)

    return Forest(
        config=config,
        classes=classes,
        n_features=p,
        n_rows=n,
        trees=trees,
        inbag_counts=inbag_counts,
        gini_importance=per_tree_gini.mean(axis=0),
        oob_votes=oob_votes,
        columns=tuple(columns) if columns is not None else None,
    )


def _vote_matrix(forest: Forest, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[1] != forest.n_features:
        raise ValueError(
            f"feature width {X.shape[1]} does not match training width {forest.n_features}"
        )
    votes = np.zeros((X.shape[0], forest.classes.size), dtype=np.int64)
    out = np.empty(X.shape[0], dtype=np.int64)
    for tree in forest.trees:
        _predict_tree(tree.feature, tree.threshold, tree.left, tree.right, tree.pred, X, out)
        np.add.at(votes, (np.arange(X.shape[0]), out), 1)
    return votes


def predict(forest: Forest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Majority-vote class labels plus per-class vote fractions.

    Exact vote ties resolve toward the first class in ascending label
    order (class 0 on binary problems).
    """
    votes = _vote_matrix(forest, X)
    fractions = votes / votes.sum(axis=1, keepdims=True)
    return forest.classes[np.argmax(votes, axis=1)], fractions


def _margins_from_votes(votes: np.ndarray, true_idx: np.ndarray) -> np.ndarray:
    totals = votes.sum(axis=1)
    margins = np.full(votes.shape[0], np.nan)
    covered = totals > 0
    fr = votes[covered] / totals[covered, None]
    true_fr = fr[np.arange(fr.shape[0]), true_idx[covered]]
    masked = fr.copy()
    masked[np.arange(fr.shape[0]), true_idx[covered]] = -1.0
    margins[covered] = true_fr - masked.max(axis=1)
    return margins


def margin_report(forest: Forest, X: np.ndarray, y: np.ndarray) -> MarginReport:
    """Vote margins for the training rows plus the OOB-margin error estimate.

    ``X``/``y`` must be the data the forest was fitted on; the OOB
    bookkeeping is keyed by training-row position.
    """
    if X.shape[0] != forest.n_rows:
        raise ValueError("margin_report expects the forest's training rows")
    true_idx = np.searchsorted(forest.classes, y).astype(np.int64)
    margins = _margins_from_votes(_vote_matrix(forest, X), true_idx)
    oob_margins = _margins_from_votes(forest.oob_votes, true_idx)
    covered = ~np.isnan(oob_margins)
    pe_star = float(np.mean(oob_margins[covered] < 0)) if covered.any() else float("nan")
    return MarginReport(margins=margins, pe_star=pe_star, oob_margins=oob_margins)


def oob_accuracy(forest: Forest, y: np.ndarray) -> float:
    """Accuracy of out-of-bag majority votes over rows with at least one vote."""
    totals = forest.oob_votes.sum(axis=1)
    covered = totals > 0
    if not covered.any():
        return float("nan")
    preds = forest.classes[np.argmax(forest.oob_votes[covered], axis=1)]
    return float(np.mean(preds == np.asarray(y)[covered]))


def importances(
    forest: Forest,
    X: np.ndarray,
    y: np.ndarray,
    permutation: bool = True,
) -> ImportanceReport:
    """Mean decrease in Gini and (optionally) in permuted OOB accuracy.

    Permutation shuffles one feature's values within each tree's OOB rows
    and measures the drop in that tree's OOB accuracy, averaged over trees;
    per-class columns restrict the accuracy to rows of one true class.
    Features a tree never splits on cannot change its predictions and score
    an exact zero for that tree.
    """
    report = ImportanceReport(gini=forest.gini_importance.copy(), columns=forest.columns)
    if not permutation:
        return report

    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] != forest.n_rows:
        raise ValueError("importances expects the forest's training rows")
    y_enc = np.searchsorted(forest.classes, np.asarray(y)).astype(np.int64)
    n_trees = len(forest.trees)
    p = forest.n_features
    n_classes = forest.classes.size

    drop_sum = np.zeros(p)
    drop_sq_sum = np.zeros(p)
    class_drop_sum = np.zeros((n_classes, p))
    class_tree_counts = np.zeros(n_classes, dtype=np.int64)

    perm_streams = np.random.SeedSequence(forest.config.seed).spawn(2 * n_trees)[n_trees:]
    for k, tree in enumerate(forest.trees):
        oob_rows = np.nonzero(forest.inbag_counts[k] == 0)[0]
        if oob_rows.size == 0:
            continue
        rng = np.random.Generator(np.random.PCG64(perm_streams[k]))
        base_preds = tree.predict(X[oob_rows])
        base_hits = base_preds == y_enc[oob_rows]
        base_acc = base_hits.mean()
        class_rows = [np.nonzero(y_enc[oob_rows] == c)[0] for c in range(n_classes)]
        base_class_acc = np.array(
            [base_hits[rows].mean() if rows.size else np.nan for rows in class_rows]
        )
        for c in range(n_classes):
            if class_rows[c].size:
                class_tree_counts[c] += 1

        used = set(tree.used_features().tolist())
        for f in range(p):
            if f not in used:
                continue  # permuting an unused feature cannot move predictions
            order = rng.permutation(oob_rows.size)
            permuted = X[oob_rows[order], f]
            correct = _count_tree_hits(
                tree.feature,
                tree.threshold,
                tree.left,
                tree.right,
                tree.pred,
                X,
                oob_rows,
                y_enc,
                f,
                permuted,
            )
            drop = base_acc - correct / oob_rows.size
            drop_sum[f] += drop
            drop_sq_sum[f] += drop * drop
            for c in range(n_classes):
                rows = class_rows[c]
                if rows.size == 0:
                    continue
                correct_c = _count_tree_hits(
                    tree.feature,
                    tree.threshold,
                    tree.left,
                    tree.right,
                    tree.pred,
                    X,
                    oob_rows[rows],
                    y_enc,
                    f,
                    permuted[rows],
                )
                class_drop_sum[c, f] += base_class_acc[c] - correct_c / rows.size

    mda = drop_sum / n_trees
    var = drop_sq_sum / n_trees - mda**2
    report.accuracy = mda
    report.accuracy_se = np.sqrt(np.maximum(var, 0.0) / n_trees)
    with np.errstate(invalid="ignore"):
        report.accuracy_per_class = class_drop_sum / np.maximum(class_tree_counts, 1)[:, None]
    return report


def to_json(forest: Forest) -> dict:
    """Versioned JSON document; the bootstrap record regenerates from the seed."""
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_FORMAT_VERSION,
        "config": {
            "n_trees": forest.config.n_trees,
            "mtry": forest.config.mtry,
            "min_leaf": forest.config.min_leaf,
            "seed": forest.config.seed,
        },
        "classes": forest.classes.tolist(),
        "n_features": forest.n_features,
        "n_rows": forest.n_rows,
        "columns": list(forest.columns) if forest.columns is not None else None,
        "gini_importance": forest.gini_importance.tolist(),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "pred": t.pred.tolist(),
                "counts": t.counts.tolist(),
            }
            for t in forest.trees
        ],
    }


def from_json(doc: dict) -> Forest:
    if doc.get("format") != FOREST_FORMAT or doc.get("version") != FOREST_FORMAT_VERSION:
        raise ValueError("not a recognized forest document")
    config = ForestConfig(**doc["config"])
    n_rows = int(doc["n_rows"])
    classes = np.asarray(doc["classes"])
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            pred=np.asarray(t["pred"], dtype=np.int64),
            counts=np.asarray(t["counts"], dtype=np.int64),
        )
        for t in doc["trees"]
    ]
    inbag_counts = np.zeros((config.n_trees, n_rows), dtype=np.int64)
    for k, (inbag, _seed) in enumerate(_tree_streams(config, n_rows)):
        inbag_counts[k] = np.bincount(inbag, minlength=n_rows)
    return Forest(
        config=config,
        classes=classes,
        n_features=int(doc["n_features"]),
        n_rows=n_rows,
        trees=trees,
        inbag_counts=inbag_counts,
        gini_importance=np.asarray(doc["gini_importance"], dtype=np.float64),
        oob_votes=np.zeros((n_rows, classes.size), dtype=np.int64),
        columns=tuple(doc["columns"]) if doc.get("columns") else None,
    )


def save(forest: Forest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_json(forest), sort_keys=True) + "\n", encoding="utf-8")


def load(path: str | Path) -> Forest:
    return from_json(json.loads(Path(path).read_text(encoding="utf-8")))
