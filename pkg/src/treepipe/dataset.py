"""Tabular case/control data: CSV I/O, stratified splitting and scoring."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, CsvParseError, DataError, FormatError

LABEL_COLUMN = "class"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable integer feature matrix with binary labels.

    ``train`` is the partition mask (True = Train row).  ``guess`` holds the
    predictions of the most recent classifier, or None.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    train: np.ndarray = field(default=None)
    guess: np.ndarray | None = None

    def __post_init__(self):
        names = tuple(self.feature_names)
        X = _frozen(self.X, np.int64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(len(self.y), 0)
        y = _frozen(self.y, np.int8)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise ContractError(
                f"feature matrix shape {X.shape} does not match {len(names)} names")
        if X.shape[0] != y.shape[0]:
            raise ContractError("feature rows and labels differ in length")
        if len(set(names)) != len(names):
            raise ContractError("duplicate feature names")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        train = (np.ones(len(y), dtype=bool) if self.train is None
                 else _frozen(self.train, bool))
        if train.shape != y.shape:
            raise ContractError("partition length differs from row count")
        guess = self.guess
        if guess is not None:
            guess = _frozen(guess, np.int8)
            if guess.shape != y.shape or not np.isin(guess, (0, 1)).all():
                raise ContractError("guess must be a 0/1 vector of length N")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "guess", guess)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def test(self) -> np.ndarray:
        return ~self.train

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def replace(self, **changes) -> Dataset:
        kw = dict(feature_names=self.feature_names, X=self.X, y=self.y,
                  train=self.train, guess=self.guess)
        kw.update(changes)
        return Dataset(**kw)

    def with_guess(self, guess) -> Dataset:
        return self.replace(guess=guess)

    def with_feature(self, name: str, values) -> Dataset:
        if name in self.feature_names:
            raise ContractError(f"feature {name!r} already present")
        X = np.column_stack([self.X, np.asarray(values, dtype=np.int64)])
        return self.replace(feature_names=self.feature_names + (name,), X=X)

    def select(self, indices) -> Dataset:
        """Keep only the feature columns at ``indices`` (in the given order)."""
        indices = list(indices)
        return self.replace(
            feature_names=tuple(self.feature_names[i] for i in indices),
            X=self.X[:, indices])

    def content_equal(self, other: Dataset) -> bool:
        """Compare names, features and labels (partition and guess ignored)."""
        return (self.feature_names == other.feature_names
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_guess = ((self.guess is None and other.guess is None)
                      or (self.guess is not None and other.guess is not None
                          and np.array_equal(self.guess, other.guess)))
        return (self.content_equal(other)
                and np.array_equal(self.train, other.train) and same_guess)

    __hash__ = None


def load_csv(path) -> Dataset:
    """Read a header-first CSV whose label column is named ``class``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if LABEL_COLUMN not in header:
            raise FormatError(f"{path}: no {LABEL_COLUMN!r} column in header")
        if len(set(header)) != len(header):
            raise FormatError(f"{path}: duplicate column names")
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    values.append(int(cell))
                except ValueError:
                    raise CsvParseError(f"{path}: non-integer cell {cell!r}",
                                        r, name) from None
            rows.append(values)
    table = np.array(rows, dtype=np.int64).reshape(len(rows), len(header))
    li = header.index(LABEL_COLUMN)
    y = table[:, li]
    if not np.isin(y, (0, 1)).all():
        raise DataError(f"{path}: labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise DataError(f"{path}: fewer than 2 distinct labels")
    names = header[:li] + header[li + 1:]
    X = np.delete(table, li, axis=1)
    return Dataset(names, X, y)


def write_csv(ds: Dataset, path) -> None:
    """Write features then ``class``; partition and guess are not stored."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(ds.feature_names) + [LABEL_COLUMN])
        for xrow, label in zip(ds.X.tolist(), ds.y.tolist()):
            writer.writerow(xrow + [label])


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _class_indices(y):
    idx = [np.flatnonzero(y == c) for c in (0, 1)]
    if min(len(i) for i in idx) == 0:
        raise DataError("both classes must be present")
    return idx


def stratified_split(ds: Dataset, train_fraction: float = 0.75,
                     seed: int = 0) -> Dataset:
    """Mark round-half-up(fraction * class size) rows of each class as Train.

    The count is clamped to [1, class size - 1] so every class keeps at least
    one Test row.  Row order is unchanged; the guess column is dropped.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ContractError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train = np.zeros(ds.n_rows, dtype=bool)
    for idx in _class_indices(ds.y):
        if len(idx) < 2:
            raise DataError("each class needs at least 2 rows to split")
        n_train = min(max(round_half_up(train_fraction * len(idx)), 1), len(idx) - 1)
        train[rng.permutation(idx)[:n_train]] = True
    return ds.replace(train=train, guess=None)


def stratified_folds(y, k: int, seed: int = 0) -> list[np.ndarray]:
    """Return k disjoint index arrays covering all rows, stratified by class."""
    if k < 2:
        raise ContractError("k must be at least 2")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for idx in _class_indices(y):
        if len(idx) < k:
            raise DataError(f"a class has {len(idx)} rows, fewer than k={k}")
        for f, chunk in enumerate(np.array_split(rng.permutation(idx), k)):
            folds[f].append(chunk)
    return [np.sort(np.concatenate(parts)) for parts in folds]


def balanced_accuracy(labels, guesses) -> float:
    """Unweighted mean of the per-class recalls."""
    labels = np.asarray(labels)
    guesses = np.asarray(guesses)
    if labels.shape != guesses.shape:
        raise ContractError("labels and guesses differ in length")
    pos = labels == 1
    neg = labels == 0
    if not pos.any() or not neg.any():
        raise ContractError("labels must contain both classes")
    sensitivity = np.count_nonzero(guesses[pos] == 1) / np.count_nonzero(pos)
    specificity = np.count_nonzero(guesses[neg] == 0) / np.count_nonzero(neg)
    return (sensitivity + specificity) / 2.0
