"""Command-line front end.

Exit codes: 0 success (and, where a model is involved, zero training false
positives verified), 1 a model or ruleset with nonzero training FP, 2 bad
input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, cart, dataset, removal, rulegen, swarm, zsvm
from .cart import DecisionTree, TrainConfig

log = logging.getLogger("zfp")

EXIT_OK, EXIT_FP, EXIT_INPUT = 0, 1, 2
MODEL_FORMAT = "zfp-model/1"
DEFAULT_GRID = "1:1,5:5,50:50,10:1,100:1,100:10,500:50,785:50,800:50,80:5,1000:50"


class CliError(Exception):
    pass


# -- argument groups ----------------------------------------------------------

def _add_dataset_args(p: argparse.ArgumentParser, training: bool = True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="path to the dataset file")
    src.add_argument("--preset", choices=sorted(dataset.PRESETS),
                     help="synthetic constellation instead of a file")
    p.add_argument("--format", choices=("csv", "kdd", "powergrid"), default="csv")
    p.add_argument("--label-col", default="label", help="label column (csv format)")
    p.add_argument("--positive-labels", default="attack",
                   help="comma-separated labels mapped to +1 (csv format)")
    p.add_argument("--drop-cols", default="", help="comma-separated columns to drop")
    p.add_argument("--categorical", default="", help="comma-separated categorical columns")
    p.add_argument("--preset-seed", type=int, default=0)
    if training:
        p.add_argument("--subsample", type=int, default=None, metavar="N")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (falls back to $ZFP_SEED, then 0)")


def _add_cart_args(p: argparse.ArgumentParser):
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=float, default=1)
    p.add_argument("--min-impurity-decrease", type=float, default=0.0)


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("ZFP_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"ZFP_SEED={env!r} is not an integer") from None
    return 0


def _cart_cfg(args) -> TrainConfig:
    try:
        return TrainConfig(args.max_depth, args.min_leaf, args.min_impurity_decrease)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load(args, code_map: dict | None = None) -> dataset.LabeledDataset:
    if args.preset:
        return dataset.synth_constellation(dataset.preset(args.preset), args.preset_seed)
    if args.format == "kdd":
        return dataset.load_kdd(args.dataset, code_map=code_map)
    if args.format == "powergrid":
        return dataset.load_powergrid(args.dataset, code_map=code_map)
    return dataset.load_csv(args.dataset, args.label_col, _split(args.positive_labels),
                            _split(args.drop_cols), categorical=_split(args.categorical),
                            code_map=code_map)


def _training_set(args) -> tuple[dataset.LabeledDataset, dict]:
    ds = _load(args)
    info = {"source": args.dataset or f"preset:{args.preset}:{args.preset_seed}",
            "format": "preset" if args.preset else args.format,
            "full": dataset.manifest_entry(ds)}
    if args.subsample is not None:
        ds = dataset.subsample(ds, args.subsample, _seed(args))
        info["subsample"] = {"n": args.subsample, "seed": _seed(args)}
    info["used"] = dataset.manifest_entry(ds)
    return ds, info


# -- manifest -----------------------------------------------------------------

def _manifest(command: str, data: dict, config: dict, seed: int) -> dict:
    m = {
        "command": command,
        "dataset": data,
        "config": config,
        "seed": seed,
        "versions": {"zfp": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    m["digest"] = hashlib.sha256(json.dumps(m, sort_keys=True).encode()).hexdigest()
    return m


def _write_manifest(out: Path, manifest: dict, outputs: dict, workers: int | None = None):
    # workers and output paths are excluded from the digest
    doc = dict(manifest, outputs=outputs)
    if workers is not None:
        doc["workers"] = workers
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _save_model(path: Path, tree: DecisionTree, ds: dataset.LabeledDataset,
                confusion: cart.ConfusionMatrix, manifest: dict, **extra):
    doc = {"format": MODEL_FORMAT, "tree": tree.to_dict(), "code_map": ds.code_map,
           "training_confusion": confusion.to_dict(), "manifest_digest": manifest["digest"]}
    doc.update(extra)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model(path) -> tuple[DecisionTree, dict]:
    try:
        doc = json.loads(Path(path).read_text())
        if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
            raise CliError(f"{path}: not a {MODEL_FORMAT} file")
        return DecisionTree.from_dict(doc["tree"]), doc
    except (OSError, json.JSONDecodeError, KeyError, cart.TreeError) as exc:
        raise CliError(f"cannot read model {path}: {exc}") from exc


def _print_cm(cm: cart.ConfusionMatrix, stream=None):
    print("TN,TP,FN,FP", file=stream or sys.stdout)
    print(",".join(str(v) for v in cm.as_row()), file=stream or sys.stdout)


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    ds, info = _training_set(args)
    cfg = _cart_cfg(args)
    seed = _seed(args)
    try:
        scfg = swarm.SwarmConfig(population=args.population, k_growth=args.k_growth,
                                 max_iterations=args.max_iters, target_fn=args.target_fn,
                                 checkpoints=tuple(int(c) for c in _split(args.checkpoints)),
                                 seed=seed, w_best=args.w_best)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("train", info, {"cart": asdict(cfg), "swarm": asdict(scfg)}, seed)
    log.info("training on %s", dataset.describe(ds))

    def progress(it, best):
        if it in scfg.checkpoints:
            log.info("iteration %d: %s", it, best.full_confusion)

    result = swarm.run(ds, cfg, scfg, workers=args.workers or os.cpu_count() or 1,
                       progress=progress)
    best = result.best
    check = cart.ConfusionMatrix.from_predictions(ds.y, best.boundary.predict(ds.X), ds.w)
    _save_model(out / "model.json", best.boundary, ds, check, manifest,
                fitness=best.fitness, iterations=result.log.iterations)
    (out / "checkpoints.csv").write_text(
        result.log.checkpoint_csv(f"manifest {manifest['digest']}"))
    result.log.write_jsonl(out / "iterations.jsonl")
    _write_manifest(out, manifest, {"model": "model.json", "checkpoints": "checkpoints.csv",
                                    "log": "iterations.jsonl"}, args.workers)
    _print_cm(check)
    if check.FP != 0:
        print(f"error: trained model has {check.FP} training false positives", file=sys.stderr)
        return EXIT_FP
    return EXIT_OK


def cmd_eval(args) -> int:
    tree, doc = load_model(args.model)
    ds = _load(args, code_map=doc.get("code_map") or None)
    try:
        cm = cart.evaluate(tree, ds)
    except cart.TreeError as exc:
        raise CliError(f"model/dataset mismatch: {exc}") from exc
    _print_cm(cm)
    return EXIT_OK if cm.FP == 0 else EXIT_FP


def cmd_rules(args) -> int:
    tree, doc = load_model(args.model)
    rs = rulegen.extract_rules(tree, inverse=args.inverse)
    fmt = "machine" if args.format == "machine" else "paper-text"
    text = rulegen.render(rs, fmt)
    if fmt == "machine":
        text = text.replace("\n", f"\n# manifest {doc.get('manifest_digest', '')}\n", 1)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    fp = doc.get("training_confusion", {}).get("FP", 0)
    if fp:
        print(f"error: source model has {fp} training false positives", file=sys.stderr)
        return EXIT_FP
    return EXIT_OK


def cmd_parse(args) -> int:
    try:
        rs = rulegen.parse(Path(args.rules).read_text())
    except OSError as exc:
        raise CliError(str(exc)) from exc
    report = rulegen.check_disjoint(rs)
    sys.stdout.write(rulegen.render(rs, "machine"))
    if not report.disjoint:
        print(f"error: overlapping rules {list(report.overlapping)}", file=sys.stderr)
        return EXIT_FP
    return EXIT_OK


def cmd_sweep(args) -> int:
    ds = dataset.synth_constellation(dataset.preset(args.preset), args.preset_seed)
    grid = zsvm.parse_grid(args.grid)
    table = zsvm.sweep_costs(ds, grid, zsvm.SolverConfig(iterations=args.iterations))
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_removal(args) -> int:
    ds, info = _training_set(args)
    cfg = _cart_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("removal", info, {"cart": asdict(cfg)}, _seed(args))
    res = removal.run_removal(ds, cfg)
    _save_model(out / "model.json", res.model, ds, res.final_confusion, manifest,
                retained=res.retained, rounds=len(res.trace))
    (out / "trace.csv").write_text(f"# manifest {manifest['digest']}\n" + res.trace.to_csv())
    _write_manifest(out, manifest, {"model": "model.json", "trace": "trace.csv"})
    _print_cm(res.final_confusion)
    return EXIT_OK if res.final_confusion.FP == 0 else EXIT_FP


def cmd_synth(args) -> int:
    ds = dataset.synth_constellation(dataset.preset(args.preset), args.preset_seed)
    header = ",".join([*ds.feature_names, "label"])
    rows = [",".join([*(repr(float(v)) for v in x), "attack" if y > 0 else "normal"])
            for x, y in zip(ds.X, ds.y)]
    text = "\n".join([header, *rows]) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zfp", description="Zero-false-positive classifier "
                                "and firewall rule generator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the swarm classifier")
    _add_dataset_args(t)
    _add_cart_args(t)
    t.add_argument("--population", type=int, default=5)
    t.add_argument("--k-growth", type=float, default=1.5)
    t.add_argument("--w-best", type=float, default=4.0)
    t.add_argument("--max-iters", type=int, default=1000)
    t.add_argument("--target-fn", type=int, default=0)
    t.add_argument("--checkpoints", default="10,50,100,500,1000")
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="confusion matrix of a model on a dataset")
    e.add_argument("--model", required=True)
    _add_dataset_args(e, training=False)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rules", help="compile a model into firewall rules")
    r.add_argument("--model", required=True)
    r.add_argument("--format", choices=("paper-text", "machine"), default="paper-text")
    r.add_argument("--inverse", action="store_true",
                   help="ACCEPT rules from normal leaves over default DENY")
    r.add_argument("--out")
    r.set_defaults(func=cmd_rules)

    pr = sub.add_parser("parse", help="parse and re-render a machine rule file")
    pr.add_argument("rules")
    pr.set_defaults(func=cmd_parse)

    s = sub.add_parser("sweep", help="class-weighted SVM cost sweep on a preset")
    s.add_argument("--preset", choices=sorted(dataset.PRESETS), default="fig2-like")
    s.add_argument("--preset-seed", type=int, default=0)
    s.add_argument("--grid", default=DEFAULT_GRID, help="c1:c2 pairs, comma separated")
    s.add_argument("--iterations", type=int, default=20000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("removal", help="iterative removal baseline")
    _add_dataset_args(m)
    _add_cart_args(m)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_removal)

    y = sub.add_parser("synth", help="write a synthetic preset as CSV")
    y.add_argument("--preset", choices=sorted(dataset.PRESETS), required=True)
    y.add_argument("--preset-seed", type=int, default=0)
    y.add_argument("--out")
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, dataset.DatasetError, cart.TreeError, rulegen.RuleError,
            zsvm.ZSVMError, swarm.SwarmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
