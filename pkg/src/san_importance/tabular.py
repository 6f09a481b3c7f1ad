"""Tabular datasets: CSV ingestion, standardization, stratified folds and a
synthetic binary generator with a known relevant/irrelevant partition."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

SYNTH_MEAN_SHIFT = 1.0


class DataError(ValueError):
    """Raised for malformed or inconsistent tabular input."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric feature matrix with integer labels.

    ``relevance_mask`` is only known for synthetic data.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    class_names: tuple
    relevance_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError("labels must be 1-D with one entry per instance")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or infinite values")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("labels must be integer class ids")
        y = y.astype(np.int64)
        names = tuple(str(n) for n in self.feature_names)
        classes = tuple(str(c) for c in self.class_names)
        if len(names) != X.shape[1]:
            raise DataError(
                f"{len(names)} feature names for {X.shape[1]} feature columns"
            )
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if y.size and (y.min() < 0 or y.max() >= len(classes)):
            raise DataError("label outside [0, n_classes)")
        if y.size:
            missing = set(range(len(classes))) - set(np.unique(y).tolist())
            if missing:
                raise DataError(f"class ids {sorted(missing)} have no instances")
        mask = self.relevance_mask
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (X.shape[1],):
                raise DataError("relevance_mask length must equal n_features")
            mask = _frozen(mask)
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "class_names", classes)
        object.__setattr__(self, "relevance_mask", mask)

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, rows) -> "Dataset":
        """Row subset. Classes that vanish keep their ids (no re-encoding)."""
        rows = np.asarray(rows)
        return _unchecked(
            self.features[rows],
            self.labels[rows],
            self.feature_names,
            self.class_names,
            self.relevance_mask,
        )

    def select_features(self, columns) -> "Dataset":
        columns = np.asarray(columns, dtype=np.int64)
        mask = None if self.relevance_mask is None else self.relevance_mask[columns]
        return _unchecked(
            self.features[:, columns],
            self.labels,
            tuple(self.feature_names[c] for c in columns),
            self.class_names,
            mask,
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(
            features, self.labels, self.feature_names, self.class_names,
            self.relevance_mask,
        )

    def equals(self, other: "Dataset") -> bool:
        """Exact equality of every field."""
        if self.relevance_mask is None:
            same_mask = other.relevance_mask is None
        else:
            same_mask = other.relevance_mask is not None and np.array_equal(
                self.relevance_mask, other.relevance_mask
            )
        return (
            same_mask
            and self.feature_names == other.feature_names
            and self.class_names == other.class_names
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )


def _unchecked(X, y, names, classes, mask) -> Dataset:
    # Subsets of a valid dataset may lose a class (e.g. a single test fold), so
    # they bypass the every-class-present check.
    ds = object.__new__(Dataset)
    object.__setattr__(ds, "features", _frozen(X))
    object.__setattr__(ds, "labels", _frozen(y))
    object.__setattr__(ds, "feature_names", tuple(names))
    object.__setattr__(ds, "class_names", tuple(classes))
    object.__setattr__(ds, "relevance_mask", None if mask is None else _frozen(mask))
    return ds


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def load_csv(path: Union[str, Path], target_column: Union[str, int]) -> Dataset:
    """Read a headed, comma-separated file.

    Class tokens are encoded by order of first appearance. Every non-target
    cell must parse as a finite real number; missing values are an error.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file (header row required)")
    header = [h.strip() for h in rows[0]]
    if isinstance(target_column, int) or (
        isinstance(target_column, str) and target_column not in header
        and target_column.lstrip("-").isdigit()
    ):
        t = int(target_column)
        if not -len(header) <= t < len(header):
            raise DataError(f"{path}: target column index {t} out of range")
        t %= len(header)
    else:
        if target_column not in header:
            raise DataError(f"{path}: missing target column {target_column!r}")
        t = header.index(target_column)
    feat_cols = [j for j in range(len(header)) if j != t]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    X = np.empty((len(body), len(feat_cols)), dtype=np.float64)
    tokens = []
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(
                f"{path}: data row {i + 1} has {len(row)} cells, expected {len(header)}"
            )
        for out_j, j in enumerate(feat_cols):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {i + 1} "
                    f"(line {i + 2}), column {header[j]!r}"
                )
            X[i, out_j] = v
        tokens.append(row[t].strip())
    if len(body) < 2:
        raise DataError(f"{path}: need at least 2 instances, found {len(body)}")
    classes: dict = {}
    for tok in tokens:
        classes.setdefault(tok, len(classes))
    if len(classes) < 2:
        raise DataError(f"{path}: need at least 2 classes, found {len(classes)}")
    y = np.array([classes[tok] for tok in tokens], dtype=np.int64)
    return Dataset(X, y, tuple(header[j] for j in feat_cols), tuple(classes))


def write_csv(data: Dataset, path: Union[str, Path], target_name: str = "class") -> None:
    """Write features followed by the target column; floats use repr so the
    file round-trips exactly through :func:`load_csv`."""
    if target_name in data.feature_names:
        raise DataError(f"target name {target_name!r} clashes with a feature name")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.feature_names) + [target_name])
        for x, label in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in x] + [data.class_names[label]])


def write_mask_csv(mask: Sequence[bool], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("relevant\n")
        for m in mask:
            fh.write("1\n" if m else "0\n")


def load_mask_csv(path: Union[str, Path]) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "relevant":
        raise DataError(f"{path}: expected header 'relevant'")
    try:
        vals = [int(v) for v in lines[1:]]
    except ValueError as exc:
        raise DataError(f"{path}: mask entries must be 0 or 1") from exc
    if any(v not in (0, 1) for v in vals):
        raise DataError(f"{path}: mask entries must be 0 or 1")
    return np.array(vals, dtype=bool)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    means: np.ndarray
    std_devs: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.means.shape[0]:
            raise DataError(
                f"standardization fitted on {self.means.shape[0]} features, "
                f"got {X.shape[-1]}"
            )
        safe = np.where(self.std_devs > 0, self.std_devs, 1.0)
        Z = (X - self.means) / safe
        Z[..., self.std_devs == 0] = 0.0
        return Z


def fit_standardization(X: np.ndarray) -> StandardizationParams:
    X = np.asarray(X, dtype=np.float64)
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    # Columns that are constant in exact arithmetic can carry roundoff spread.
    const = np.all(X == X[:1], axis=0) if X.shape[0] else np.ones(X.shape[1], bool)
    stds = np.where(const, 0.0, stds)
    return StandardizationParams(_frozen(means), _frozen(stds))


def standardize(data: Dataset) -> tuple[Dataset, StandardizationParams]:
    """Z-score every feature with the (n-1) sample deviation; constant
    features become all-zero."""
    params = fit_standardization(data.features)
    return apply_standardization(data, params), params


def apply_standardization(data: Dataset, params: StandardizationParams) -> Dataset:
    Z = params.transform(data.features)
    return _unchecked(Z, data.labels, data.feature_names, data.class_names,
                      data.relevance_mask)


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_indices, test_indices) for one fold, both ascending."""
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def __iter__(self):
        for f in range(self.n_folds):
            yield self.split(f)


def stratified_kfold(data: Dataset, n_folds: int, seed: int) -> FoldPlan:
    """Shuffle each class independently and deal its members round-robin.

    The dealing offset continues across classes so that fold sizes stay
    balanced as well as per-class counts.
    """
    if n_folds < 2:
        raise DataError("n_folds must be at least 2")
    counts = np.bincount(data.labels, minlength=data.n_classes)
    small = [data.class_names[c] for c in range(data.n_classes) if counts[c] < n_folds]
    if small:
        raise DataError(
            f"classes {small} have fewer than n_folds={n_folds} members"
        )
    rng = np.random.default_rng(seed)
    assignments = np.empty(data.n_instances, dtype=np.int64)
    offset = 0
    for c in range(data.n_classes):
        members = rng.permutation(np.flatnonzero(data.labels == c))
        assignments[members] = (offset + np.arange(members.size)) % n_folds
        offset = (offset + members.size) % n_folds
    return FoldPlan(n_folds, _frozen(assignments), int(seed))


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def make_classification(
    n_samples: int, n_features: int, n_informative: int, seed: int
) -> Dataset:
    """Balanced binary problem with ``n_informative`` relevant features.

    Each informative feature is Gaussian with unit variance whose mean
    differs by ``SYNTH_MEAN_SHIFT`` between the classes (class means at
    +-shift/2 along a random sign per feature). The other features are
    standard normal and independent of the class. Informative columns sit at
    random positions recorded in ``relevance_mask``.
    """
    if n_samples < 4:
        raise DataError("n_samples must be at least 4")
    if n_features < 1:
        raise DataError("n_features must be positive")
    if not 1 <= n_informative <= n_features:
        raise DataError("need 1 <= n_informative <= n_features")
    rng = np.random.default_rng(seed)
    y = np.arange(n_samples) % 2
    y = rng.permutation(y)
    if y[0] != 0:
        # class ids follow first appearance so the data round-trips via CSV
        y = 1 - y
    informative = np.sort(rng.choice(n_features, size=n_informative, replace=False))
    mask = np.zeros(n_features, dtype=bool)
    mask[informative] = True
    signs = rng.choice([-1.0, 1.0], size=n_informative)
    X = rng.standard_normal((n_samples, n_features))
    centred = (y - 0.5)[:, None] * SYNTH_MEAN_SHIFT
    X[:, informative] += centred * signs[None, :]
    names = tuple(f"f{j}" for j in range(n_features))
    return Dataset(X, y, names, ("0", "1"), mask)
