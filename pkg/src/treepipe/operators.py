"""Dataset-to-dataset pipeline operators."""

from __future__ import annotations

import numba
import numpy as np

from .dataset import Dataset
from .errors import ContractError, PipelineEvaluationError
from .learners import (DEFAULT_MAX_DEPTH, _grow, encode, fit_decision_tree,
                       fit_random_forest, predict_forest, predict_tree)

SYNTHETIC_PREFIX = "SynF_"


class SyntheticFeatureCounter:
    """Hands out ``SynF_<id>`` names, unique within one pipeline evaluation."""

    def __init__(self, start: int = 1):
        if start < 1:
            raise ContractError("counter must start at 1 or above")
        self.next_id = start

    def take(self) -> str:
        name = f"{SYNTHETIC_PREFIX}{self.next_id}"
        self.next_id += 1
        return name


def _check_fittable(ds: Dataset):
    if ds.n_features < 1:
        raise PipelineEvaluationError("classifier needs at least one feature")
    if not ds.train.any():
        raise PipelineEvaluationError("classifier needs at least one Train row")


def _emit(ds: Dataset, predictions, counter: SyntheticFeatureCounter) -> Dataset:
    name = counter.take()
    while name in ds.feature_names:
        name = counter.take()
    return ds.with_feature(name, predictions).with_guess(predictions)


def classify_dt(ds: Dataset, max_depth: int, counter: SyntheticFeatureCounter):
    """Like :func:`op_classify_dt` but also returns the fitted tree."""
    _check_fittable(ds)
    model = fit_decision_tree(ds, max_depth=max_depth)
    return _emit(ds, predict_tree(model, ds), counter), model


def classify_rf(ds: Dataset, n_trees: int, counter: SyntheticFeatureCounter,
                seed: int = 0, max_depth: int = DEFAULT_MAX_DEPTH):
    _check_fittable(ds)
    model = fit_random_forest(ds, n_trees=n_trees, max_depth=max_depth, seed=seed)
    return _emit(ds, predict_forest(model, ds), counter), model


def op_classify_dt(ds: Dataset, max_depth: int,
                   counter: SyntheticFeatureCounter) -> Dataset:
    """Fit a tree on Train rows, predict every row into guess and a new SynF column."""
    return classify_dt(ds, max_depth, counter)[0]


def op_classify_rf(ds: Dataset, n_trees: int, counter: SyntheticFeatureCounter,
                   seed: int = 0) -> Dataset:
    return classify_rf(ds, n_trees, counter, seed)[0]


@numba.njit(cache=True)
def _pair_scores(tables, F, V, n_pos, n_neg, max_depth):
    # tables[c, i*V + a, j*V + b]: Train rows of class c with x_i == a, x_j == b
    scores = np.empty(F * (F - 1) // 2, np.float64)
    cell_codes = np.empty((2, 2 * V * V), np.int64)
    cell_y = np.empty(2 * V * V, np.int64)
    cell_w = np.empty(2 * V * V, np.float64)
    p = 0
    for i in range(F):
        for j in range(i + 1, F):
            m = 0
            for a in range(V):
                for b in range(V):
                    for c in range(2):
                        count = tables[c, i * V + a, j * V + b]
                        if count > 0.0:
                            cell_codes[0, m] = a
                            cell_codes[1, m] = b
                            cell_y[m] = c
                            cell_w[m] = count
                            m += 1
            feat, thr, left, right, counts = _grow(
                cell_codes[:, :m].copy(), V, cell_y[:m], cell_w[:m],
                np.arange(m), max_depth, 2, np.uint64(0))
            tp = 0.0
            tn = 0.0
            for node in range(len(feat)):
                if feat[node] < 0:
                    if counts[node, 1] > counts[node, 0]:
                        tp += counts[node, 1]
                    else:
                        tn += counts[node, 0]
            # one rounding step, so equal rationals give equal floats
            scores[p] = (tp * n_neg + tn * n_pos) / (2.0 * n_pos * n_neg)
            p += 1
    return scores


def pair_index(F: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(F) for j in range(i + 1, F)]


def score_pairs(ds: Dataset, max_depth: int = DEFAULT_MAX_DEPTH) -> np.ndarray:
    """Training balanced accuracy of a two-feature tree for each pair (i<j, lexicographic)."""
    rows = ds.train
    y = ds.y[rows].astype(np.int64)
    if y.min() == y.max():
        raise PipelineEvaluationError("Train rows hold a single class")
    codes, values = encode(ds.X[rows])
    F, V = ds.n_features, max(len(values), 1)
    onehot = np.zeros((len(y), F * V))
    onehot[np.arange(len(y))[:, None], np.arange(F) * V + codes.T] = 1.0
    tables = np.stack([onehot[y == c].T @ onehot[y == c] for c in (0, 1)])
    n_pos = float(y.sum())
    return _pair_scores(tables, F, V, n_pos, len(y) - n_pos, max_depth)


def rank_pairs(ds: Dataset, max_depth: int = DEFAULT_MAX_DEPTH):
    """Pairs sorted by descending score; equal scores keep lexicographic order."""
    scores = score_pairs(ds, max_depth)
    order = np.argsort(-scores, kind="stable")
    pairs = pair_index(ds.n_features)
    return [(pairs[k], float(scores[k])) for k in order]


def op_select_pairs(ds: Dataset, n_pairs: int) -> Dataset:
    """Keep the union of features in the ``n_pairs`` best-scoring feature pairs.

    Guess, labels and partition pass through unchanged.
    """
    if n_pairs < 1:
        raise ContractError("n_pairs must be >= 1")
    if ds.n_features < 2:
        raise PipelineEvaluationError("pair selection needs at least 2 features")
    keep = set()
    for (i, j), _ in rank_pairs(ds)[:n_pairs]:
        keep.update((i, j))
    return ds.select(sorted(keep))


def op_combine(a: Dataset, b: Dataset) -> Dataset:
    """Name-based feature union of two aligned branches; guess is dropped."""
    if a.n_rows != b.n_rows:
        raise PipelineEvaluationError("combined branches differ in row count")
    if not np.array_equal(a.y, b.y) or not np.array_equal(a.train, b.train):
        raise PipelineEvaluationError("combined branches differ in labels or partition")
    present = set(a.feature_names)
    extra = [i for i, name in enumerate(b.feature_names) if name not in present]
    X = np.column_stack([a.X, b.X[:, extra]])
    names = a.feature_names + tuple(b.feature_names[i] for i in extra)
    return Dataset(names, X, a.y, a.train, None)

