"""Rank a synthetic dataset with every method, compare the rankings and run
the top-n logistic regression sweep.

    python3 scripts/run_synthetic_benchmark.py --out results/bench
"""

import argparse
from pathlib import Path

import numpy as np

from san_importance.baselines import ForestParams
from san_importance.eval_harness import Ranker, topn_sweep, write_eval_csv
from san_importance.importance import METHODS, write_importance_csv
from san_importance.ranking_compare import similarity_matrix, write_matrix_csv
from san_importance.san import SanConfig
from san_importance.tabular import make_classification, standardize, stratified_kfold


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-samples", type=int, default=600)
    ap.add_argument("--n-features", type=int, default=40)
    ap.add_argument("--n-informative", type=int, default=10)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=16)
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/bench")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_classification(args.n_samples, args.n_features, args.n_informative, args.seed)
    rankers = {m: Ranker(m, san_config=SanConfig(epochs=args.epochs, seed=args.seed),
                         forest_params=ForestParams(n_trees=args.trees, seed=args.seed))
               for m in METHODS}

    std, _ = standardize(data)
    vecs = []
    for method, ranker in rankers.items():
        vec = ranker(std)
        write_importance_csv(vec, out / f"rank_{method}.csv")
        hits = int(data.relevance_mask[vec.top(args.n_informative)].sum())
        print(f"{method:20s} relevant in top {args.n_informative}: {hits}")
        vecs.append(vec)

    mat = similarity_matrix(vecs)
    write_matrix_csv(mat, out / "similarity.csv")
    print("\nsimilarity (normalised FUJI area)")
    for name, row in zip(mat.methods, mat.areas):
        print(f"{name:20s} " + " ".join(f"{v:.2f}" for v in row))

    grid = np.unique(np.linspace(1, args.n_features, 10).astype(int))
    folds = stratified_kfold(data, args.folds, args.seed)
    print("\nrelative F1 at cutoffs", grid.tolist())
    for method, ranker in rankers.items():
        curve = topn_sweep(data, ranker, grid, folds)
        write_eval_csv(curve, out / f"eval_{method}.csv")
        print(f"{method:20s} " + " ".join(f"{v:.2f}" for v in curve.relative_f1))


if __name__ == "__main__":
    main()
