"""Batch command-line front end.

    san-importance rank      --input data.csv --target class --method relieff --out r.csv
    san-importance compare   --rankings a.csv b.csv c.csv --out cmp/
    san-importance evaluate  --input data.csv --target class --methods relieff,attention --out ev/
    san-importance synth     --n-samples 1000 --n-features 100 --n-informative 50 --out s.csv
    san-importance attn-diff --seed 1 --out report.json

Every parameter can also come from ``--config file.json`` (keys named as the
long flags with dashes turned into underscores); flags given on the command
line win. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, baselines, eval_harness, ranking_compare, san
from .importance import (
    METHOD_ALIASES,
    METHODS,
    read_importance_csv,
    resolve_method,
    write_importance_csv,
)
from .tabular import (
    load_csv,
    make_classification,
    standardize,
    stratified_kfold,
    write_csv,
    write_mask_csv,
)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Run configurations
# ---------------------------------------------------------------------------


@dataclass
class MethodOptions:
    """Ranker parameters shared by ``rank`` and ``evaluate``."""

    hidden_dim: int = 128
    epochs: int = 32
    batch_size: int = 5
    learning_rate: float = 0.001
    dropout_rate: float = 0.2
    n_heads: int = 1
    n_neighbors: int = 10
    relieff_sample_size: str = "all"
    n_trees: int = 100
    max_features: str = "sqrt"
    min_leaf_size: int = 1
    mi_bins: int = 10

    def ranker(self, method: str, seed: int) -> eval_harness.Ranker:
        sample = self.relieff_sample_size
        max_feat = self.max_features
        return eval_harness.Ranker(
            method,
            san_config=san.SanConfig(
                hidden_dim=self.hidden_dim, epochs=self.epochs,
                batch_size=self.batch_size, learning_rate=self.learning_rate,
                dropout_rate=self.dropout_rate, n_heads=self.n_heads, seed=seed,
            ),
            relieff_params=baselines.ReliefFParams(
                self.n_neighbors, sample if sample == "all" else int(sample), seed
            ),
            forest_params=baselines.ForestParams(
                self.n_trees, max_feat if max_feat == "sqrt" else int(max_feat),
                self.min_leaf_size, seed,
            ),
            mi_bins=self.mi_bins,
        )


@dataclass
class RankConfig(MethodOptions):
    input: str = ""
    target: str = "class"
    method: str = "attention"
    out: str = "ranking.csv"
    seed: int = 0
    standardize: bool = True


@dataclass
class CompareConfig:
    rankings: list = field(default_factory=list)
    manifest: str = ""
    cutoffs: str = "default"
    out: str = "compare"


@dataclass
class EvaluateConfig(MethodOptions):
    input: str = ""
    target: str = "class"
    methods: str = "attention,attentionPositive,attentionGlobal,relieff,mutual_info,random_forest"
    cutoffs: str = "default"
    folds: int = 10
    seed: int = 0
    out: str = "evaluate"
    standardize: bool = True
    logreg_c: float = 1.0
    logreg_max_iters: int = 500
    logreg_tolerance: float = 1e-5


@dataclass
class SynthConfig:
    n_samples: int = 1000
    n_features: int = 100
    n_informative: int = 50
    seed: int = 0
    out: str = "synthetic.csv"
    mask_out: str = ""


@dataclass
class AttnDiffConfig:
    n_samples: int = 1000
    n_features: int = 100
    n_informative: int = 50
    repetitions: int = 3
    folds: int = 3
    seed: int = 0
    out: str = "attn_diff.json"
    csv: str = ""
    standardize: bool = True
    hidden_dim: int = 128
    epochs: int = 32
    batch_size: int = 5
    learning_rate: float = 0.001
    dropout_rate: float = 0.2
    n_heads: int = 1


COMMANDS = {
    "rank": RankConfig,
    "compare": CompareConfig,
    "evaluate": EvaluateConfig,
    "synth": SynthConfig,
    "attn-diff": AttnDiffConfig,
}


def build_config(cls, namespace: argparse.Namespace):
    """Dataclass defaults, then ``--config`` JSON, then explicit flags."""
    known = {f.name for f in fields(cls)}
    values: dict = {}
    cfg_path = getattr(namespace, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {cfg_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config {cfg_path} must hold a JSON object")
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        values.update(raw)
    for key, val in vars(namespace).items():
        if key in known:
            values[key] = val
    return cls(**values)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def parse_cutoffs(spec: str, n_features: int) -> np.ndarray:
    """``default``, a comma list (``1,5,10``) or ``start:stop[:step]`` ranges."""
    spec = spec.strip()
    if spec in ("", "default"):
        return ranking_compare.default_grid(n_features)
    out = []
    try:
        for part in spec.split(","):
            if ":" in part:
                bits = [int(b) for b in part.split(":")]
                start, stop = bits[0], bits[1]
                step = bits[2] if len(bits) > 2 else 1
                out.extend(range(start, stop + 1, step))
            else:
                out.append(int(part))
    except ValueError as exc:
        raise UsageError(f"bad cutoff grid {spec!r}") from exc
    return np.array(out, dtype=np.int64)


def _params(cfg) -> dict:
    d = dataclasses.asdict(cfg)
    d["version"] = __version__
    return d


def _method_from_files(path: Path) -> str:
    side = path.with_name(path.name + ".json")
    if side.exists():
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
        if isinstance(meta, dict) and meta.get("method"):
            return str(meta["method"])
    return path.stem


def _load_rankings(paths) -> list:
    vecs = []
    for p in paths:
        p = Path(p)
        vecs.append(read_importance_csv(p, method=_method_from_files(p)))
    names = [v.method for v in vecs]
    if len(set(names)) != len(names):
        # fall back to file stems when sidecars repeat a method
        vecs = [dataclasses.replace(v, method=Path(p).stem) for v, p in zip(vecs, paths)]
    first = vecs[0]
    aligned = [first]
    for v, p in zip(vecs[1:], paths[1:]):
        if set(v.feature_names) != set(first.feature_names):
            raise ValueError(f"feature sets differ between {paths[0]} and {p}")
        aligned.append(v.aligned_to(first.feature_names))
    return aligned


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_rank(cfg: RankConfig) -> None:
    method = resolve_method(cfg.method)
    data = load_csv(cfg.input, cfg.target)
    if cfg.standardize:
        data, _ = standardize(data)
    vec = cfg.ranker(method, cfg.seed)(data)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_importance_csv(vec, out)
    _dump_json({"method": vec.method, "params": _params(cfg), "seed": cfg.seed,
                "version": __version__, "metadata": vec.metadata},
               out.with_name(out.name + ".json"))


def _write_comparison(vecs, grid_spec, out: Path, tag: str = "") -> ranking_compare.SimilarityMatrix:
    n = len(vecs[0])
    grid = parse_cutoffs(grid_spec, n)
    suffix = f"_{tag}" if tag else ""
    if len(vecs) == 1:
        mat = ranking_compare.SimilarityMatrix((vecs[0].method,), np.ones((1, 1)))
    else:
        mat = ranking_compare.similarity_matrix(vecs, grid)
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                curve = ranking_compare.fuji_curve(vecs[i], vecs[j], grid)
                ranking_compare.write_curve_csv(
                    curve, out / f"curve{suffix}_{vecs[i].method}__{vecs[j].method}.csv"
                )
    ranking_compare.write_matrix_csv(mat, out / f"similarity{suffix}.csv")
    return mat


def cmd_compare(cfg: CompareConfig) -> None:
    if not cfg.rankings and not cfg.manifest:
        raise UsageError("compare needs --rankings and/or --manifest")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.rankings:
        paths = list(dict.fromkeys(cfg.rankings))
        _write_comparison(_load_rankings(paths), cfg.cutoffs, out)
    if cfg.manifest:
        with open(cfg.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        datasets = manifest.get("datasets") if isinstance(manifest, dict) else None
        if not isinstance(datasets, dict) or not datasets:
            raise ValueError(f"{cfg.manifest}: expected {{\"datasets\": {{name: [files]}}}}")
        base = Path(cfg.manifest).parent
        mats = []
        for name in sorted(datasets):
            paths = [str(base / p) for p in dict.fromkeys(datasets[name])]
            mats.append(_write_comparison(_load_rankings(paths), cfg.cutoffs, out, name))
        ranking_compare.write_matrix_csv(ranking_compare.mean_matrix(mats),
                                         out / "similarity_mean.csv")
    _dump_json({"params": _params(cfg),
                "membership": ranking_compare.MEMBERSHIP_RULE,
                "area": "composite Simpson (non-uniform), normalised by cutoff span"},
               out / "compare.json")


def cmd_evaluate(cfg: EvaluateConfig) -> None:
    methods = [m.strip() for m in cfg.methods.split(",") if m.strip()]
    try:
        methods = [resolve_method(m) for m in methods]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not methods:
        raise UsageError("no methods given")
    data = load_csv(cfg.input, cfg.target)
    grid = parse_cutoffs(cfg.cutoffs, data.n_features)
    plan = stratified_kfold(data, cfg.folds, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"params": _params(cfg), "curves": {}}
    for method in methods:
        curve = eval_harness.topn_sweep(
            data, cfg.ranker(method, cfg.seed), grid, plan,
            standardize=cfg.standardize, c=cfg.logreg_c,
            max_iters=cfg.logreg_max_iters, tolerance=cfg.logreg_tolerance,
        )
        eval_harness.write_eval_csv(curve, out / f"{method}.csv")
        summary["curves"][method] = {
            "file": f"{method}.csv",
            "baseline_f1_per_fold": curve.baseline_per_fold,
            "metadata": curve.metadata,
        }
    _dump_json(summary, out / "evaluate.json")


def cmd_synth(cfg: SynthConfig) -> None:
    data = make_classification(cfg.n_samples, cfg.n_features, cfg.n_informative, cfg.seed)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mask_out = Path(cfg.mask_out) if cfg.mask_out else out.with_name(out.stem + "_mask.csv")
    write_csv(data, out)
    write_mask_csv(data.relevance_mask, mask_out)
    _dump_json({"params": _params(cfg), "target": "class", "mask": str(mask_out),
                "mean_shift": 1.0}, out.with_name(out.name + ".json"))


def cmd_attn_diff(cfg: AttnDiffConfig) -> None:
    san_cfg = san.SanConfig(
        hidden_dim=cfg.hidden_dim, epochs=cfg.epochs, batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate, dropout_rate=cfg.dropout_rate,
        n_heads=cfg.n_heads, seed=cfg.seed,
    )
    report = eval_harness.attention_difference_experiment(
        cfg.n_samples, cfg.n_features, cfg.n_informative, cfg.repetitions,
        cfg.folds, san_cfg, cfg.seed, cfg.standardize,
    )
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    csv_path = Path(cfg.csv) if cfg.csv else out.with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("feature,relevant,mean_attention_positive,mean_attention_negative\n")
        pos, neg = report.mean_attention_positive, report.mean_attention_negative
        for j in range(cfg.n_features):
            p = repr(float(pos[j])) if pos.size else ""
            q = repr(float(neg[j])) if neg.size else ""
            fh.write(f"f{j},{int(report.relevance_mask[j])},{p},{q}\n")


HANDLERS = {
    "rank": cmd_rank,
    "compare": cmd_compare,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "attn-diff": cmd_attn_diff,
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _method_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("ranker parameters")
    g.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--learning-rate", dest="learning_rate", type=float)
    g.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    g.add_argument("--heads", dest="n_heads", type=int)
    g.add_argument("--neighbors", dest="n_neighbors", type=int)
    g.add_argument("--relieff-sample-size", dest="relieff_sample_size")
    g.add_argument("--trees", dest="n_trees", type=int)
    g.add_argument("--max-features", dest="max_features")
    g.add_argument("--min-leaf-size", dest="min_leaf_size", type=int)
    g.add_argument("--mi-bins", dest="mi_bins", type=int)


def _common(p: argparse.ArgumentParser, data_input: bool = True) -> None:
    p.add_argument("--config", help="JSON file with parameter overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    if data_input:
        p.add_argument("--input")
        p.add_argument("--target")
        p.add_argument("--no-standardize", dest="standardize", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="san-importance",
        description="Feature importance with self-attention networks and baselines.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("rank", argument_default=S, help="rank the features of one dataset")
    _common(p)
    p.add_argument("--method", choices=list(METHODS) + list(METHOD_ALIASES))
    _method_flags(p)

    p = sub.add_parser("compare", argument_default=S, help="FUJI curves and similarity matrix")
    p.add_argument("--config")
    p.add_argument("--rankings", nargs="+")
    p.add_argument("--manifest")
    p.add_argument("--cutoffs")
    p.add_argument("--out")

    p = sub.add_parser("evaluate", argument_default=S, help="top-n logistic regression sweeps")
    _common(p)
    p.add_argument("--methods", help="comma-separated method names")
    p.add_argument("--cutoffs")
    p.add_argument("--folds", type=int)
    p.add_argument("--logreg-c", dest="logreg_c", type=float)
    p.add_argument("--logreg-max-iters", dest="logreg_max_iters", type=int)
    p.add_argument("--logreg-tolerance", dest="logreg_tolerance", type=float)
    _method_flags(p)

    p = sub.add_parser("synth", argument_default=S, help="write a synthetic dataset")
    _common(p, data_input=False)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--n-features", dest="n_features", type=int)
    p.add_argument("--n-informative", dest="n_informative", type=int)
    p.add_argument("--mask-out", dest="mask_out")

    p = sub.add_parser("attn-diff", argument_default=S,
                       help="attention on relevant features, positive vs negative class")
    _common(p, data_input=False)
    p.add_argument("--no-standardize", dest="standardize", action="store_false")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--n-features", dest="n_features", type=int)
    p.add_argument("--n-informative", dest="n_informative", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--csv")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    p.add_argument("--heads", dest="n_heads", type=int)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        cfg = build_config(COMMANDS[args.command], args)
        if args.command in ("rank", "evaluate") and not cfg.input:
            raise UsageError("--input is required")
    except (UsageError, TypeError) as exc:
        sub.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    try:
        HANDLERS[args.command](cfg)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
