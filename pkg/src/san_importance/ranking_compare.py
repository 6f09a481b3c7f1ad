"""Similarity of two feature rankings as a function of the top-n cutoff, and
the normalised area under that curve."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .importance import ImportanceVector

# tagged onto every emitted curve so readers know which fuzzy variant was used
MEMBERSHIP_RULE = "mu(f)=min(1,score(f)/theta_n); theta_n=n-th largest score; min/max set ops"


@dataclass(frozen=True, eq=False)
class FujiCurve:
    cutoffs: np.ndarray
    values: np.ndarray
    ranking_a_method: str
    ranking_b_method: str
    kind: str = "fuzzy"


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    methods: tuple
    areas: np.ndarray


def _check_pair(a: ImportanceVector, b: ImportanceVector) -> ImportanceVector:
    if a.feature_names == b.feature_names:
        return b
    try:
        return b.aligned_to(a.feature_names)
    except ValueError:
        raise ValueError(
            f"rankings {a.method!r} and {b.method!r} cover different feature sets"
        ) from None


def fuzzy_membership(scores: np.ndarray, n: int) -> np.ndarray:
    """Graded top-n membership: 1 for anything at or above the n-th largest
    score, proportional below it."""
    order = np.lexsort((np.arange(scores.size), -scores))
    theta = scores[order[n - 1]]
    if theta <= 0:
        mu = np.zeros(scores.size)
        mu[order[:n]] = 1.0
        return mu
    # a subnormal theta can overflow the ratio; it clamps to 1 either way
    with np.errstate(over="ignore"):
        return np.minimum(1.0, scores / theta)


def fuji_at_cutoff(a: ImportanceVector, b: ImportanceVector, n: int) -> float:
    """Fuzzy Jaccard index of the two rankings' top-n sets."""
    b = _check_pair(a, b)
    if not 1 <= n <= len(a):
        raise ValueError(f"cutoff {n} outside [1, {len(a)}]")
    mu_a = fuzzy_membership(a.scores, n)
    mu_b = fuzzy_membership(b.scores, n)
    # min/max are symmetric, so fuji(a, b) == fuji(b, a) bit for bit
    lo = np.minimum(mu_a, mu_b).sum()
    hi = np.maximum(mu_a, mu_b).sum()
    return float(lo / hi)


def default_grid(n_features: int, dense_until: int = 100, n_log: int = 50) -> np.ndarray:
    """Every integer up to ``dense_until``, then log-spaced up to n_features."""
    dense = np.arange(1, min(n_features, dense_until) + 1)
    if n_features <= dense_until:
        return dense
    tail = np.unique(np.round(np.geomspace(dense_until, n_features, n_log)).astype(np.int64))
    return np.unique(np.concatenate([dense, tail, [n_features]]))


def _grid(a: ImportanceVector, cutoff_grid) -> np.ndarray:
    if cutoff_grid is None:
        return default_grid(len(a))
    grid = np.asarray(cutoff_grid, dtype=np.int64)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("cutoff grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("cutoff grid must be strictly increasing")
    if grid[0] < 1 or grid[-1] > len(a):
        raise ValueError(f"cutoff grid must lie within [1, {len(a)}]")
    return grid


def fuji_curve(a: ImportanceVector, b: ImportanceVector,
               cutoff_grid: Optional[Sequence[int]] = None) -> FujiCurve:
    b = _check_pair(a, b)
    grid = _grid(a, cutoff_grid)
    values = np.array([fuji_at_cutoff(a, b, int(n)) for n in grid])
    return FujiCurve(grid, values, a.method, b.method)


def crisp_jaccard_curve(a: ImportanceVector, b: ImportanceVector,
                        cutoff_grid: Optional[Sequence[int]] = None) -> FujiCurve:
    """Plain Jaccard index of the top-n index sets."""
    b = _check_pair(a, b)
    grid = _grid(a, cutoff_grid)
    oa, ob = a.order(), b.order()
    values = []
    for n in grid:
        sa, sb = set(oa[:n].tolist()), set(ob[:n].tolist())
        values.append(len(sa & sb) / len(sa | sb))
    return FujiCurve(grid, np.array(values), a.method, b.method, kind="crisp")


def simpson_area(x, v) -> float:
    """Composite Simpson's rule on a possibly non-uniform grid.

    Each consecutive pair of intervals is integrated exactly as the quadratic
    through its three points; a leftover final interval uses the trapezoid
    rule.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    n_int = x.size - 1
    pairs = n_int // 2
    h0 = x[1:2 * pairs:2] - x[0:2 * pairs:2]
    h1 = x[2:2 * pairs + 1:2] - x[1:2 * pairs:2]
    f0, f1, f2 = v[0:2 * pairs:2], v[1:2 * pairs:2], v[2:2 * pairs + 1:2]
    hs = h0 + h1
    total = float(np.sum(
        hs / 6.0 * ((2.0 - h1 / h0) * f0 + hs * hs / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2)
    ))
    if n_int % 2:
        total += 0.5 * (x[-1] - x[-2]) * (v[-1] + v[-2])
    return total


def simpson_auc(curve: FujiCurve) -> float:
    """Area under the curve divided by the cutoff span, so a constant curve
    integrates to its value."""
    x = np.asarray(curve.cutoffs, dtype=np.float64)
    if x.size < 2:
        raise ValueError("curve needs at least 2 points")
    return simpson_area(x, curve.values) / (x[-1] - x[0])


def similarity_matrix(rankings: Sequence[ImportanceVector],
                      cutoff_grid: Optional[Sequence[int]] = None) -> SimilarityMatrix:
    """Normalised FUJI area for every pair of rankings; unit diagonal."""
    if len(rankings) < 2:
        raise ValueError("need at least 2 rankings")
    first = rankings[0]
    aligned = [first] + [_check_pair(first, r) for r in rankings[1:]]
    m = len(aligned)
    areas = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            areas[i, j] = areas[j, i] = simpson_auc(
                fuji_curve(aligned[i], aligned[j], cutoff_grid)
            )
    return SimilarityMatrix(tuple(r.method for r in aligned), areas)


def mean_matrix(matrices: Sequence[SimilarityMatrix]) -> SimilarityMatrix:
    """Elementwise mean of per-dataset matrices over the same methods."""
    if not matrices:
        raise ValueError("no matrices to average")
    methods = matrices[0].methods
    stack = []
    for mat in matrices:
        if set(mat.methods) != set(methods):
            raise ValueError("matrices cover different methods")
        pos = [mat.methods.index(mth) for mth in methods]
        stack.append(mat.areas[np.ix_(pos, pos)])
    return SimilarityMatrix(methods, np.mean(stack, axis=0))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_curve_csv(curve: FujiCurve, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# a={curve.ranking_a_method}\n# b={curve.ranking_b_method}\n")
        fh.write(f"# kind={curve.kind}\n")
        if curve.kind == "fuzzy":
            fh.write(f"# membership={MEMBERSHIP_RULE}\n")
        fh.write("cutoff,value\n")
        for c, v in zip(curve.cutoffs, curve.values):
            fh.write(f"{int(c)},{float(v)!r}\n")


def read_curve_csv(path: Union[str, Path]) -> FujiCurve:
    meta, rows = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
            elif line and line != "cutoff,value":
                c, v = line.split(",")
                rows.append((int(c), float(v)))
    arr = np.array(rows)
    return FujiCurve(arr[:, 0].astype(np.int64), arr[:, 1], meta.get("a", ""),
                     meta.get("b", ""), meta.get("kind", "fuzzy"))


def write_matrix_csv(mat: SimilarityMatrix, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", *mat.methods])
        for name, row in zip(mat.methods, mat.areas):
            w.writerow([name, *(repr(float(v)) for v in row)])


def read_matrix_csv(path: Union[str, Path]) -> SimilarityMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    methods = tuple(rows[0][1:])
    areas = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return SimilarityMatrix(methods, areas)
