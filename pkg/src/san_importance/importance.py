from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

METHODS = (
    "attention",
    "attentionPositive",
    "attentionGlobal",
    "attentionGlobalRWS",
    "relieff",
    "mutual_info",
    "random_forest",
)
# label used in the original figures for the correct-only extractor
METHOD_ALIASES = {"attentionClean": "attentionPositive"}


@dataclass(frozen=True, eq=False)
class ImportanceVector:
    """Non-negative per-feature scores tagged with the method that made them."""

    scores: np.ndarray
    method: str
    feature_names: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 1 or s.shape[0] != len(self.feature_names):
            raise ValueError("scores must be 1-D with one entry per feature name")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        if np.any(s < 0):
            raise ValueError(f"{self.method}: scores must be non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return self.scores.shape[0]

    def order(self) -> np.ndarray:
        """Feature indices by descending score, ascending index on ties."""
        return np.lexsort((np.arange(len(self)), -self.scores))

    def top(self, n: int) -> np.ndarray:
        return self.order()[:n]

    def ranks(self) -> np.ndarray:
        """1-based rank of every feature."""
        r = np.empty(len(self), dtype=np.int64)
        r[self.order()] = np.arange(1, len(self) + 1)
        return r

    def aligned_to(self, feature_names) -> "ImportanceVector":
        """Reorder to the given feature order (must be the same name set)."""
        names = tuple(feature_names)
        if set(names) != set(self.feature_names) or len(names) != len(self):
            raise ValueError("feature sets differ")
        pos = {n: i for i, n in enumerate(self.feature_names)}
        idx = np.array([pos[n] for n in names], dtype=np.int64)
        return ImportanceVector(self.scores[idx], self.method, names, dict(self.metadata))


def resolve_method(name: str) -> str:
    name = METHOD_ALIASES.get(name, name)
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return name


def write_importance_csv(vec: ImportanceVector, path: Union[str, Path]) -> None:
    """``feature,score,rank`` rows sorted by rank."""
    ranks = vec.ranks()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "score", "rank"])
        for j in vec.order():
            w.writerow([vec.feature_names[j], repr(float(vec.scores[j])), int(ranks[j])])


def read_importance_csv(path: Union[str, Path], method: str = "") -> ImportanceVector:
    """Features come back in file (rank) order."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["feature", "score", "rank"]:
        raise ValueError(f"{path}: expected header feature,score,rank")
    names, scores = [], []
    for i, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        try:
            scores.append(float(row[1]))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: bad score on row {i}") from exc
        names.append(row[0])
    return ImportanceVector(np.array(scores), method or Path(path).stem, tuple(names))
