"""Binary CART decision trees and bagged random forests with Gini importance.

The split search runs on integer codes (positions in the sorted table of
distinct values), so a threshold ``t`` means ``value <= t``.  Rows carry
non-negative weights: a bootstrap sample is a weight vector of draw counts,
and a contingency table is a set of weighted cells.  Both give exactly the
same tree as fitting on the expanded rows.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .dataset import Dataset
from .errors import ContractError

DEFAULT_MAX_DEPTH = 10

_MASK64 = (1 << 64) - 1


@numba.njit(cache=True)
def _splitmix(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15))
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _grow(codes, n_codes, y, w, rows, max_depth, n_sub, seed):
    """Greedy depth-first CART growth over ``rows`` (positive weights only).

    codes: (F, n) int64 value codes, feature-major.  Returns node arrays
    (feature, threshold code, left, right, class weights); feature -1 marks
    a leaf.
    """
    F = codes.shape[0]
    n = len(rows)
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, 2), np.float64)

    idx = rows.copy()
    hist = np.zeros(2 * max(n_codes, 1), np.float64)
    cand = np.arange(F)
    sub = np.arange(F)
    state = np.uint64(seed)

    stack_node = np.zeros(cap, np.int64)
    stack_lo = np.zeros(cap, np.int64)
    stack_hi = np.zeros(cap, np.int64)
    stack_depth = np.zeros(cap, np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]

        c0 = 0.0
        c1 = 0.0
        for k in range(lo, hi):
            r = idx[k]
            if y[r] == 1:
                c1 += w[r]
            else:
                c0 += w[r]
        counts[node, 0] = c0
        counts[node, 1] = c1
        total = c0 + c1
        if c0 == 0.0 or c1 == 0.0 or depth >= max_depth:
            continue

        # candidate features, kept in ascending index order for tie-breaking;
        # a partial Fisher-Yates over any permutation draws a uniform subset
        m = F
        if n_sub < F:
            for i in range(n_sub):
                state, z = _splitmix(state)
                j = i + np.int64(z % np.uint64(F - i))
                tmp = cand[i]
                cand[i] = cand[j]
                cand[j] = tmp
            for i in range(n_sub):
                sub[i] = cand[i]
            for i in range(1, n_sub):
                v = sub[i]
                k = i - 1
                while k >= 0 and sub[k] > v:
                    sub[k + 1] = sub[k]
                    k -= 1
                sub[k + 1] = v
            m = n_sub

        eps = 1e-12 * total
        parent_score = (c0 * c0 + c1 * c1) / total
        best_score = parent_score
        best_f = -1
        best_t = -1
        for ci in range(m):
            f = sub[ci]
            for t in range(2 * n_codes):
                hist[t] = 0.0
            cf = codes[f]
            for k in range(lo, hi):
                r = idx[k]
                hist[2 * cf[r] + y[r]] += w[r]
            l0 = 0.0
            l1 = 0.0
            for t in range(n_codes - 1):
                l0 += hist[2 * t]
                l1 += hist[2 * t + 1]
                lw = l0 + l1
                if lw == 0.0:
                    continue
                r0 = c0 - l0
                r1 = c1 - l1
                rw = r0 + r1
                if rw <= 0.0:
                    break
                score = (l0 * l0 + l1 * l1) / lw + (r0 * r0 + r1 * r1) / rw
                # improvements must beat rounding noise, so exact ties keep
                # the lowest feature and threshold
                if score > best_score + eps:
                    best_score = score
                    best_f = f
                    best_t = t
        if best_f < 0:
            continue

        # partition idx[lo:hi] in place: codes <= best_t first
        i = lo
        j = hi - 1
        while i <= j:
            if codes[best_f, idx[i]] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feat[node] = best_f
        thr[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered first
        stack_node[sp] = n_nodes + 1
        stack_lo[sp] = i
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = n_nodes
        stack_lo[sp] = lo
        stack_hi[sp] = i
        stack_depth[sp] = depth + 1
        sp += 1
        n_nodes += 2

    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes],
            counts[:n_nodes])


@numba.njit(cache=True)
def _bootstrap(state, n):
    w = np.zeros(n, np.float64)
    for i in range(n):
        state, z = _splitmix(state)
        w[np.int64(z % np.uint64(n))] += 1.0
    return w, state


@numba.njit(cache=True)
def _grow_forest(codes, n_codes, y, seeds, max_depth, n_sub):
    """Grow one tree per seed on a bootstrap drawn from that seed's stream.

    Node arrays of all trees are concatenated; tree t owns nodes
    offsets[t]:offsets[t + 1].
    """
    n = codes.shape[1]
    n_trees = len(seeds)
    parts = []
    offsets = np.zeros(n_trees + 1, np.int64)
    for t in range(n_trees):
        w, state = _bootstrap(seeds[t], n)
        rows = np.flatnonzero(w > 0.0)
        part = _grow(codes, n_codes, y, w, rows, max_depth, n_sub, state)
        parts.append(part)
        offsets[t + 1] = offsets[t] + len(part[0])
    total = offsets[n_trees]
    feat = np.empty(total, np.int64)
    thr = np.empty(total, np.int64)
    left = np.empty(total, np.int64)
    right = np.empty(total, np.int64)
    counts = np.empty((total, 2), np.float64)
    for t in range(n_trees):
        a = offsets[t]
        b = offsets[t + 1]
        f, th, l, r, c = parts[t]
        feat[a:b] = f
        thr[a:b] = th
        left[a:b] = l
        right[a:b] = r
        counts[a:b] = c
    return feat, thr, left, right, counts, offsets


@numba.njit(cache=True)
def _forest_votes(X, packed, offsets):
    # packed[node] = (feature column, threshold, left, right, label), global indices
    n = X.shape[0]
    n_trees = len(offsets) - 1
    out = np.empty((n_trees, n), np.int8)
    for t in range(n_trees):
        root = offsets[t]
        for r in range(n):
            node = root
            while packed[node, 0] >= 0:
                if X[r, packed[node, 0]] <= packed[node, 1]:
                    node = packed[node, 2]
                else:
                    node = packed[node, 3]
            out[t, r] = packed[node, 4]
    return out


@numba.njit(cache=True)
def _predict(X, cols, feat, thresh, left, right, label):
    n = X.shape[0]
    out = np.empty(n, np.int8)
    for r in range(n):
        node = 0
        while feat[node] >= 0:
            if X[r, cols[feat[node]]] <= thresh[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = label[node]
    return out


def encode(X):
    """Map integer values to dense codes; returns (codes (F, n), values)."""
    X = np.asarray(X, dtype=np.int64)
    if X.size and X.min() >= 0 and X.max() < 128:
        # small non-negative values are their own codes; unused codes only
        # add duplicate cuts, which the lowest-threshold tie-break skips
        return np.ascontiguousarray(X.T, dtype=np.int8), np.arange(X.max() + 1, dtype=np.int64)
    values, inverse = np.unique(X, return_inverse=True)
    codes = np.ascontiguousarray(inverse.reshape(X.shape).T, dtype=np.int64)
    return codes, values


def _compact(X):
    """int8 copy of small-valued data for cache-friendly traversal."""
    if X.size and X.min() >= -128 and X.max() < 128:
        return X.astype(np.int8)
    return X


def gini(c0, c1) -> float:
    total = c0 + c1
    if total == 0:
        return 0.0
    return 1.0 - (c0 / total) ** 2 - (c1 / total) ** 2


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Array-encoded binary tree.  ``feature[i] == -1`` marks leaf ``i``."""

    feature_names: tuple[str, ...]
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def label(self) -> np.ndarray:
        # tie -> 0
        return (self.counts[:, 1] > self.counts[:, 0]).astype(np.int8)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    def split_features(self) -> set[str]:
        return {self.feature_names[f] for f in self.feature if f >= 0}


@dataclass(frozen=True, eq=False)
class RandomForest:
    """Packed node arrays of all trees; tree t owns ``offsets[t]:offsets[t+1]``.

    Child indices are local to their tree.
    """

    feature_names: tuple[str, ...]
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray
    seeds: np.ndarray
    max_depth: int

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    @functools.cached_property
    def trees(self) -> tuple[DecisionTree, ...]:
        out = []
        for a, b in zip(self.offsets[:-1], self.offsets[1:]):
            out.append(DecisionTree(self.feature_names, self.feature[a:b],
                                    self.threshold[a:b], self.left[a:b],
                                    self.right[a:b], self.counts[a:b], self.max_depth))
        return tuple(out)


def _thresholds(feat, thr, values):
    if not len(values):
        return np.zeros_like(thr)
    return np.where(feat >= 0, values[np.clip(thr, 0, None)], 0).astype(np.int64)


def _fit_arrays(X, y, w, names, max_depth, n_sub, seed) -> DecisionTree:
    X = np.asarray(X, np.int64)
    w = np.asarray(w, np.float64)
    codes, values = encode(X)
    feat, thr, left, right, counts = _grow(
        codes, len(values), np.asarray(y, np.int64), w, np.flatnonzero(w > 0),
        max_depth, n_sub, np.uint64(seed & _MASK64))
    return DecisionTree(tuple(names), feat, _thresholds(feat, thr, values),
                        left, right, counts, max_depth)


def _train_arrays(ds: Dataset, feature_subset):
    if feature_subset is None:
        cols = np.arange(ds.n_features)
    else:
        cols = np.asarray(list(feature_subset), dtype=np.int64)
    rows = ds.train
    if not rows.any():
        raise ContractError("no Train rows to fit on")
    X = ds.X[np.ix_(rows, cols)]
    names = [ds.feature_names[c] for c in cols]
    return X, ds.y[rows], names


def fit_decision_tree(ds: Dataset, feature_subset=None,
                      max_depth: int = DEFAULT_MAX_DEPTH,
                      seed: int = 0) -> DecisionTree:
    """Fit a CART tree on the Train rows of ``ds``.

    Every feature (or every feature in ``feature_subset``) is searched at
    each node.  ``seed`` is accepted for interface symmetry with the forest;
    the full search is deterministic.
    """
    if max_depth < 1:
        raise ContractError("max_depth must be >= 1")
    X, y, names = _train_arrays(ds, feature_subset)
    w = np.ones(len(y))
    return _fit_arrays(X, y, w, names, max_depth, len(names), seed)


def fit_weighted_tree(X, y, w, names, max_depth=DEFAULT_MAX_DEPTH) -> DecisionTree:
    """Fit on explicitly weighted rows, e.g. a bootstrap or a contingency table."""
    return _fit_arrays(X, y, w, names, max_depth, len(names), 0)


def _columns(model_names, ds: Dataset):
    lookup = {name: i for i, name in enumerate(ds.feature_names)}
    missing = [n for n in model_names if n not in lookup]
    if missing:
        raise ContractError(f"dataset lacks model features: {missing[:5]}")
    return np.array([lookup[n] for n in model_names], dtype=np.int64)


def predict_tree(model: DecisionTree, ds: Dataset) -> np.ndarray:
    """Leaf-majority labels for every row (Train and Test)."""
    cols = _columns(model.feature_names, ds)
    return _predict(_compact(ds.X), cols, model.feature, model.threshold, model.left,
                    model.right, model.label)


def tree_seeds(seed: int, n_trees: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(n_trees, dtype=np.uint64)


def fit_random_forest(ds: Dataset, n_trees: int = 100,
                      max_depth: int = DEFAULT_MAX_DEPTH, seed: int = 0,
                      max_features: int | None = None) -> RandomForest:
    """Bagged trees, each on an N_train-size bootstrap of the Train rows.

    Each split considers ceil(sqrt(F)) random features unless
    ``max_features`` overrides it.  Every tree owns a pre-assigned seed
    derived from ``seed``; that stream drives both its bootstrap draws and
    its feature draws.
    """
    if n_trees < 1:
        raise ContractError("n_trees must be >= 1")
    if max_depth < 1:
        raise ContractError("max_depth must be >= 1")
    X, y, names = _train_arrays(ds, None)
    F = len(names)
    n_sub = max_features if max_features is not None else math.ceil(math.sqrt(F))
    n_sub = min(max(n_sub, 1), F)
    seeds = tree_seeds(seed, n_trees)
    codes, values = encode(X)
    feat, thr, left, right, counts, offsets = _grow_forest(
        codes, len(values), np.asarray(y, np.int64), seeds, max_depth, n_sub)
    return RandomForest(tuple(names), feat, _thresholds(feat, thr, values), left,
                        right, counts, offsets, seeds, max_depth)


def bootstrap_weights(seed: int, n: int) -> np.ndarray:
    """Draw counts of the bootstrap used by the tree seeded with ``seed``."""
    return _bootstrap(np.uint64(seed & _MASK64), n)[0]


def forest_votes(model: RandomForest, ds: Dataset) -> np.ndarray:
    """(n_trees, N) matrix of per-tree predictions."""
    cols = _columns(model.feature_names, ds)
    base = np.repeat(model.offsets[:-1], np.diff(model.offsets))
    split = model.feature >= 0
    packed = np.stack([
        np.where(split, cols[np.maximum(model.feature, 0)], -1),
        model.threshold,
        np.where(split, base + model.left, -1),
        np.where(split, base + model.right, -1),
        model.counts[:, 1] > model.counts[:, 0],
    ], axis=1)
    small = np.abs(model.threshold).max(initial=0) < 2**31 and len(packed) < 2**31
    packed = packed.astype(np.int32 if small else np.int64)
    return _forest_votes(_compact(ds.X), packed, model.offsets)


def predict_forest(model: RandomForest, ds: Dataset) -> np.ndarray:
    """Majority vote; an exact tie goes to label 0."""
    votes = forest_votes(model, ds).sum(axis=0, dtype=np.int64)
    return (2 * votes > model.n_trees).astype(np.int8)


def _node_gini(counts):
    total = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / total[:, None]
    return np.where(total > 0, 1.0 - (p * p).sum(axis=1), 0.0), total


def _tree_importance(feature, left, right, counts, n_features) -> np.ndarray:
    g, w = _node_gini(counts)
    split = np.flatnonzero(feature >= 0)
    l, r = left[split], right[split]
    decrease = (w[split] * g[split] - w[l] * g[l] - w[r] * g[r]) / w[0]
    return np.bincount(feature[split], weights=decrease, minlength=n_features)


def _normalise(imp):
    s = imp.sum()
    return imp / s if s > 0 else np.zeros_like(imp)


def gini_importance(model: DecisionTree | RandomForest) -> dict[str, float]:
    """Normalised mean decrease in Gini impurity per feature.

    Forest scores are the average of the per-tree normalised scores,
    renormalised.  A model without splits scores zero everywhere.
    """
    names = model.feature_names
    if isinstance(model, RandomForest):
        imp = np.mean([_normalise(_tree_importance(t.feature, t.left, t.right, t.counts,
                                                   len(names)))
                       for t in model.trees], axis=0)
    else:
        imp = _tree_importance(model.feature, model.left, model.right, model.counts,
                               len(names))
    imp = _normalise(imp)
    return dict(zip(names, imp.tolist()))
