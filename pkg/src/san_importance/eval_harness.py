"""Ranking quality measured through a downstream classifier.

A ranking is judged by how well an L2 logistic regression does when it only
sees the ranking's top-n features, relative to seeing all of them. Rankers
and standardization are always fit on the training portion of a fold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import baselines, san
from .importance import ImportanceVector, resolve_method
from .tabular import (
    Dataset,
    FoldPlan,
    apply_standardization,
    fit_standardization,
    make_classification,
    stratified_kfold,
)

POSITIVE_CLASS = 1


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogRegModel:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    regularization_c: float
    n_iters: int = 0
    objective_history: tuple = ()

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        if np.asarray(X).shape[-1] != self.weights.shape[1]:
            raise ValueError("feature count does not match the model")
        return np.argmax(self.decision(X), axis=1)


def _objective(W, b, X, Y, penalty):
    Z = X @ W.T + b
    Z = Z - Z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Z).sum(axis=1))
    ce = np.mean(logsum - (Z * Y).sum(axis=1))
    return ce + penalty * np.sum(W * W)


def _objective_grad(W, b, X, Y, penalty):
    n = X.shape[0]
    Z = X @ W.T + b
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    S = E.sum(axis=1, keepdims=True)
    P = E / S
    f = np.mean(np.log(S[:, 0]) - (Z * Y).sum(axis=1)) + penalty * np.sum(W * W)
    D = (P - Y) / n
    return f, D.T @ X + 2 * penalty * W, D.sum(axis=0)


def train_logreg(features, labels, c: float = 1.0, max_iters: int = 500,
                 tolerance: float = 1e-5, n_classes: Optional[int] = None) -> LogRegModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Minimises mean cross-entropy + ||W||^2 / (2 c n) (bias unpenalised).
    Step sizes come from Armijo backtracking; after each accepted step the
    trial step is doubled so that flat stretches are crossed quickly.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, d = X.shape
    if c <= 0:
        raise ValueError("c must be positive")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if np.unique(y).size < 2:
        raise ValueError("logistic regression needs at least 2 classes present")
    Y = np.zeros((n, k))
    Y[np.arange(n), y] = 1.0
    penalty = 1.0 / (2.0 * c * n)
    W = np.zeros((k, d))
    b = np.zeros(k)
    f, gW, gb = _objective_grad(W, b, X, Y, penalty)
    if not math.isfinite(f):
        raise FloatingPointError("non-finite logistic objective at initialisation")
    history = [f]
    step = 1.0
    n_iter = 0
    for _ in range(max_iters):
        gsq = float(np.sum(gW * gW) + np.sum(gb * gb))
        if math.sqrt(gsq) < tolerance:
            break
        accepted = False
        while step >= 1e-30:
            W_new = W - step * gW
            b_new = b - step * gb
            f_new = _objective(W_new, b_new, X, Y, penalty)
            if math.isfinite(f_new) and f_new <= f - 0.5 * step * gsq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no representable decrease left
            break
        W, b = W_new, b_new
        f, gW, gb = _objective_grad(W, b, X, Y, penalty)
        history.append(f)
        n_iter += 1
        step *= 2.0
    return LogRegModel(W, b, float(c), n_iter, tuple(history))


def logreg_objective(model: LogRegModel, features, labels) -> float:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    Y = np.zeros((X.shape[0], model.weights.shape[0]))
    Y[np.arange(X.shape[0]), y] = 1.0
    penalty = 1.0 / (2.0 * model.regularization_c * X.shape[0])
    return float(_objective(model.weights, model.bias, X, Y, penalty))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def f1_macro(predictions, truth, n_classes: Optional[int] = None) -> float:
    """Unweighted mean of per-class F1. A class with no support in either
    argument scores 0."""
    p = np.asarray(predictions, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape:
        raise ValueError("predictions and truth differ in length")
    if p.size == 0:
        raise ValueError("empty label vectors")
    k = n_classes if n_classes is not None else int(max(p.max(), t.max())) + 1
    scores = []
    for c in range(k):
        tp = np.sum((p == c) & (t == c))
        denom = np.sum(p == c) + np.sum(t == c)
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Rankers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ranker:
    """A named ranking procedure with its parameters, callable on a Dataset."""

    method: str
    san_config: san.SanConfig = san.SanConfig()
    relieff_params: baselines.ReliefFParams = baselines.ReliefFParams()
    forest_params: baselines.ForestParams = baselines.ForestParams()
    mi_bins: int = 10

    def __post_init__(self):
        object.__setattr__(self, "method", resolve_method(self.method))

    def __call__(self, data: Dataset) -> ImportanceVector:
        m = self.method
        if m == "relieff":
            return baselines.relieff(data, self.relieff_params)
        if m == "mutual_info":
            return baselines.mutual_information(data, self.mi_bins)
        if m == "random_forest":
            return baselines.random_forest_importance(data, self.forest_params)
        model = san.train(data, self.san_config)
        if m == "attention":
            return san.importance_instance(model, data)
        if m == "attentionPositive":
            return san.importance_instance_clean(model, data)
        if m == "attentionGlobal":
            return san.importance_global(model, data.feature_names)
        return san.importance_global_rws(model, data.feature_names)

    def describe(self) -> dict:
        out = {"method": self.method}
        if self.method.startswith("attention"):
            out["san_config"] = _plain(self.san_config)
        elif self.method == "relieff":
            out["relieff_params"] = _plain(self.relieff_params)
        elif self.method == "random_forest":
            out["forest_params"] = _plain(self.forest_params)
        else:
            out["mi_bins"] = self.mi_bins
        return out


def _plain(obj) -> dict:
    return {k: v for k, v in vars(obj).items()}


RankerLike = Callable[[Dataset], ImportanceVector]


# ---------------------------------------------------------------------------
# Top-n sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EvalCurve:
    cutoffs: np.ndarray
    relative_f1: np.ndarray
    method: str
    per_fold_raw: np.ndarray  # (folds, cutoffs)
    baseline_per_fold: np.ndarray  # (folds,)
    metadata: dict = field(default_factory=dict)


def _fold_data(data: Dataset, folds: FoldPlan, fold: int, standardize: bool):
    train_idx, test_idx = folds.split(fold)
    tr, te = data.subset(train_idx), data.subset(test_idx)
    if standardize:
        params = fit_standardization(tr.features)
        tr, te = apply_standardization(tr, params), apply_standardization(te, params)
    return tr, te


def fold_rankings(data: Dataset, ranker: RankerLike, folds: FoldPlan,
                  standardize: bool = True) -> list:
    """The ranking each fold's training portion produces."""
    return [ranker(_fold_data(data, folds, f, standardize)[0])
            for f in range(folds.n_folds)]


def topn_sweep(data: Dataset, ranker: RankerLike, cutoff_grid: Sequence[int],
               folds: FoldPlan, standardize: bool = True, c: float = 1.0,
               max_iters: int = 500, tolerance: float = 1e-5) -> EvalCurve:
    """Relative macro-F1 of logistic regression on each ranking's top-n.

    Selected columns are passed to the classifier in their original order, so
    the full cutoff reproduces the all-features baseline exactly.
    """
    grid = np.asarray(cutoff_grid, dtype=np.int64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ValueError("cutoff grid must be strictly increasing positive integers")
    if grid[-1] > data.n_features:
        raise ValueError(f"cutoff {grid[-1]} exceeds n_features={data.n_features}")
    if folds.assignments.shape[0] != data.n_instances:
        raise ValueError("fold plan does not match the dataset")
    raw = np.zeros((folds.n_folds, grid.size))
    base = np.zeros(folds.n_folds)
    method = ""

    def fit_score(tr, te, cols):
        model = train_logreg(tr.features[:, cols], tr.labels, c, max_iters, tolerance,
                             n_classes=data.n_classes)
        return f1_macro(model.predict(te.features[:, cols]), te.labels, data.n_classes)

    for f in range(folds.n_folds):
        tr, te = _fold_data(data, folds, f, standardize)
        ranking = ranker(tr)
        method = ranking.method
        order = ranking.order()
        all_cols = np.arange(data.n_features)
        base[f] = fit_score(tr, te, all_cols)
        for j, n in enumerate(grid):
            raw[f, j] = fit_score(tr, te, np.sort(order[:n]))
    base_mean = base.mean()
    rel = raw.mean(axis=0) / base_mean if base_mean > 0 else np.zeros(grid.size)
    meta = {
        "f1_average": "macro",
        "aggregation": "mean_over_folds(F1_topn) / mean_over_folds(F1_all)",
        "logreg": {"c": c, "max_iters": max_iters, "tolerance": tolerance},
        "n_folds": folds.n_folds,
        "fold_seed": folds.seed,
        "standardize": standardize,
    }
    if isinstance(ranker, Ranker):
        meta["ranker"] = ranker.describe()
    return EvalCurve(grid, rel, method, raw, base, meta)


def write_eval_csv(curve: EvalCurve, path: Union[str, Path]) -> None:
    n_folds = curve.per_fold_raw.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("cutoff,relative_f1," + ",".join(f"fold{f}_f1" for f in range(n_folds)) + "\n")
        for j, cut in enumerate(curve.cutoffs):
            cells = [str(int(cut)), repr(float(curve.relative_f1[j]))]
            cells += [repr(float(v)) for v in curve.per_fold_raw[:, j]]
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# Attention on relevant vs irrelevant features
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AttnDiffReport:
    mean_attention_positive: np.ndarray
    mean_attention_negative: np.ndarray
    folds_used: int
    relevant_mass_positive: float
    relevant_mass_negative: float
    total_folds: int = 0
    n_positive: int = 0
    n_negative: int = 0
    fold_accuracies: tuple = ()
    relevance_mask: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def num(v):
            return None if v is None or not math.isfinite(v) else float(v)

        payload = {
            "folds_used": self.folds_used,
            "total_folds": self.total_folds,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "relevant_mass_positive": num(self.relevant_mass_positive),
            "relevant_mass_negative": num(self.relevant_mass_negative),
            "mean_attention_positive": [float(v) for v in self.mean_attention_positive],
            "mean_attention_negative": [float(v) for v in self.mean_attention_negative],
            "fold_accuracies": [float(a) for a in self.fold_accuracies],
            "relevance_mask": (None if self.relevance_mask is None
                               else [int(m) for m in self.relevance_mask]),
            "params": self.params,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def derive_seed(*parts: int) -> int:
    """Stable 64-bit child seed of an integer tuple."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def attention_difference_experiment(
    n_samples: int = 1000,
    n_features: int = 100,
    n_informative: int = 50,
    repetitions: int = 3,
    folds: int = 3,
    config: san.SanConfig = san.SanConfig(),
    seed: int = 0,
    standardize: bool = True,
) -> AttnDiffReport:
    """Mean attention of correctly classified positive and negative test
    instances, pooled over the folds whose test accuracy exceeds 0.5."""
    data = make_classification(n_samples, n_features, n_informative, seed)
    sums = {0: np.zeros(n_features), 1: np.zeros(n_features)}
    counts = {0: 0, 1: 0}
    used = 0
    accs = []
    for r in range(repetitions):
        plan = stratified_kfold(data, folds, derive_seed(seed, r))
        for f in range(folds):
            tr, te = _fold_data(data, plan, f, standardize)
            cfg = san.SanConfig(**{**vars(config), "seed": derive_seed(seed, r, f)})
            model = san.train(tr, cfg)
            probs, att = san.forward(model, te.features)
            pred = np.argmax(probs, axis=1)
            hit = pred == te.labels
            acc = float(hit.mean())
            accs.append(acc)
            if not acc > 0.5:
                continue
            used += 1
            for cls in (0, 1):
                sel = hit & (te.labels == cls)
                sums[cls] += att[sel].sum(axis=0)
                counts[cls] += int(sel.sum())

    def mean(cls):
        if used == 0 or counts[cls] == 0:
            return np.empty(0)
        return sums[cls] / counts[cls]

    pos, neg = mean(POSITIVE_CLASS), mean(1 - POSITIVE_CLASS)
    mask = data.relevance_mask
    return AttnDiffReport(
        mean_attention_positive=pos,
        mean_attention_negative=neg,
        folds_used=used,
        relevant_mass_positive=float(pos[mask].sum()) if pos.size else math.nan,
        relevant_mass_negative=float(neg[mask].sum()) if neg.size else math.nan,
        total_folds=repetitions * folds,
        n_positive=counts[POSITIVE_CLASS],
        n_negative=counts[1 - POSITIVE_CLASS],
        fold_accuracies=tuple(accs),
        relevance_mask=mask,
        params={
            "n_samples": n_samples, "n_features": n_features,
            "n_informative": n_informative, "repetitions": repetitions,
            "folds": folds, "seed": seed, "standardize": standardize,
            "san_config": _plain(config),
        },
    )
