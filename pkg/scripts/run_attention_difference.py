"""Attention on relevant features for correctly classified positive vs
negative instances, over several master seeds.

    python3 scripts/run_attention_difference.py --seeds 1 2 3 --out results/attn
"""

import argparse
import time
from pathlib import Path

import numpy as np

from san_importance.eval_harness import attention_difference_experiment
from san_importance.san import SanConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--n-samples", type=int, default=1000)
    ap.add_argument("--n-features", type=int, default=100)
    ap.add_argument("--n-informative", type=int, default=50)
    ap.add_argument("--repetitions", type=int, default=3)
    ap.add_argument("--folds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=32)
    ap.add_argument("--out", default="results/attn")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    masses = []
    for seed in args.seeds:
        start = time.perf_counter()
        rep = attention_difference_experiment(
            args.n_samples, args.n_features, args.n_informative,
            args.repetitions, args.folds, SanConfig(epochs=args.epochs), seed=seed,
        )
        (out / f"seed{seed}.json").write_text(rep.to_json())
        masses.append(rep.relevant_mass_positive)
        print(f"seed {seed}: folds used {rep.folds_used}/{rep.total_folds}, "
              f"relevant mass positive {rep.relevant_mass_positive:.3f}, "
              f"negative {rep.relevant_mass_negative:.3f} "
              f"({time.perf_counter() - start:.1f}s)")
    uniform = args.n_informative / args.n_features
    wins = int(np.sum(np.array(masses) > uniform))
    print(f"{wins}/{len(masses)} seeds above the uniform mass {uniform:.2f}")


if __name__ == "__main__":
    main()
