"""Command-line entry point: ``ddikit {prepare,train,evaluate,explain,report}``.

Every command writes its outputs, plus a ``manifest.json`` recording the config
hash, input hashes and library versions, into a fresh run directory named
``<timestamp>-<config hash>`` under ``--out``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import pickle
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import TrainConfig
from .dataset import INPUT_FILES, file_hash, load_dataset, write_exclusions
from .kgstore import InputError, make_folds

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
CACHE_ENV = "DDIKIT_CACHE"
PREPARED_VERSION = 1

log = logging.getLogger("ddikit")


# -- helpers --------------------------------------------------------------------

def cache_root(arg=None) -> Path:
    if arg:
        return Path(arg)
    if os.environ.get(CACHE_ENV):
        return Path(os.environ[CACHE_ENV])
    return Path.home() / ".cache" / "ddikit"


def load_config(args) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        overrides[key] = value
    try:
        return cfg.with_overrides(overrides)
    except (KeyError, ValueError) as exc:
        raise InputError(f"bad configuration: {exc}") from exc


def data_hashes(data_dir) -> dict:
    data_dir = Path(data_dir)
    missing = [n for n in INPUT_FILES if not (data_dir / n).exists()]
    if missing:
        raise InputError(f"missing input files in {data_dir}: {', '.join(missing)}")
    return {n: file_hash(data_dir / n) for n in INPUT_FILES}


def versions() -> dict:
    import rdkit
    import torch

    return {"ddikit": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "torch": torch.__version__, "rdkit": rdkit.__version__}


def new_run_dir(out, cfg: TrainConfig, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(out) / f"{stamp}-{cfg.hash()}"
    run, n = base, 1
    while run.exists():  # two runs inside one second
        run = base.with_name(f"{base.name}.{n}")
        n += 1
    run.mkdir(parents=True)
    (run / "config.cfg").write_text(cfg.to_text())
    return run


def write_manifest(run: Path, command: str, cfg: TrainConfig, hashes: dict, **extra):
    manifest = {"command": command, "config_hash": cfg.hash(), "model_hash": cfg.model_hash(),
                "data_hashes": hashes, "versions": versions(),
                "created": time.strftime("%Y-%m-%dT%H:%M:%S"), **extra}
    (run / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def prepared_key(hashes: dict, cfg: TrainConfig, header: bool, top_relations) -> str:
    text = json.dumps({"v": PREPARED_VERSION, "data": hashes, "header": header,
                       "top": top_relations, "fp_bits": cfg.fp_bits,
                       "fp_radius": cfg.fp_radius}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def prepare_dataset(args, cfg: TrainConfig):
    """Load the inputs, reusing a cached parse when inputs and parameters match.

    Returns ``(dataset, hashes, key, cache_hit)``.
    """
    hashes = data_hashes(args.data)
    key = prepared_key(hashes, cfg, args.header, args.top_relations)
    root = cache_root(args.cache)
    path = root / "prepared" / f"{key}.pkl"
    if path.exists():
        with open(path, "rb") as fh:
            return pickle.load(fh), hashes, key, True
    ds = load_dataset(args.data, header=args.header, top_relations=args.top_relations,
                      fp_bits=cfg.fp_bits, fp_radius=cfg.fp_radius,
                      cache_dir=root / "substructures")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(ds, fh)
    tmp.replace(path)
    return ds, hashes, key, False


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# -- commands -------------------------------------------------------------------

def cmd_prepare(args) -> int:
    cfg = load_config(args)
    ds, hashes, key, hit = prepare_dataset(args, cfg)
    run = new_run_dir(args.out, cfg, "prepare")
    summary = ds.summary()
    write_exclusions(ds.exclusions, run / "exclusions.tsv")
    folds = make_folds(ds.samples, cfg.n_folds, cfg.fold_mode, cfg.seed, cfg.valid_fraction)
    names = ds.id_maps.entities.names
    rel = ds.relation_names

    def rows(samples):
        return [[names[s.u], rel[s.r], names[s.v]] for s in samples]

    (run / "folds.json").write_text(json.dumps(
        [{"fold": f.fold_id, "mode": f.mode, "train": rows(f.train), "valid": rows(f.valid),
          "test": rows(f.test)} for f in folds]) + "\n")
    (run / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(run, "prepare", cfg, hashes, prepared_key=key, cache_hit=hit)
    _print({"run_dir": str(run), "cache_hit": hit, **summary})
    for e in ds.exclusions:
        print(f"excluded {e.drug}: {e.reason}", file=sys.stderr)
    return EXIT_OK


def _parse_folds(text, n):
    if text is None:
        return None
    try:
        folds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"--folds expects comma-separated integers, got {text!r}") from exc
    bad = [f for f in folds if not 0 <= f < n]
    if bad:
        raise InputError(f"fold ids {bad} outside 0..{n - 1}")
    return folds


def cmd_train(args) -> int:
    from .trainer import run_cv

    cfg = load_config(args)
    ds, hashes, key, hit = prepare_dataset(args, cfg)
    run = new_run_dir(args.out, cfg, "train")
    write_exclusions(ds.exclusions, run / "exclusions.tsv")
    write_manifest(run, "train", cfg, hashes, prepared_key=key, cache_hit=hit,
                   top_relations=args.top_relations, header=args.header)

    def progress(fold, epoch, f1):
        log.info("fold %d epoch %d valid macro-F1 %.4f", fold, epoch, f1)

    metrics = run_cv(cfg, ds, out_dir=run, folds=_parse_folds(args.folds, cfg.n_folds),
                     fidelity=args.fidelity, baselines=args.baselines, progress=progress)
    _print({"run_dir": str(run), "aggregate": metrics.get("aggregate")})
    return EXIT_OK


def _load_run(run_dir):
    run = Path(run_dir)
    if not (run / "manifest.json").exists():
        raise InputError(f"{run} is not a run directory (no manifest.json)")
    manifest = json.loads((run / "manifest.json").read_text())
    cfg = TrainConfig.load(run / "config.cfg")
    return run, manifest, cfg


def _fold_bundle(ds, ckpt, cfg):
    from .batching import DataBundle
    from .kgstore import DdiSample, training_graph

    if list(ckpt["entity_names"]) != list(ds.id_maps.entities.names):
        raise InputError("checkpoint entity registry does not match the prepared data")
    held = [DdiSample(*x) for x in ckpt["held_out"]]
    graph = training_graph(ds.kg, held)
    return DataBundle(graph, ds.mols, ds.subs, ds.n_relations, cfg.k, cfg.node_cap)


def _checkpoint_args(args, run=None):
    """Dataset arguments recorded at training time, unless given explicitly."""
    if run is not None:
        manifest = json.loads((Path(run) / "manifest.json").read_text())
        if args.top_relations is None:
            args.top_relations = manifest.get("top_relations")
        args.header = args.header or manifest.get("header", False)
    return args


def cmd_evaluate(args) -> int:
    from .trainer import evaluate, fidelity_eval, model_from_checkpoint, read_checkpoint
    from .trainer import write_fidelity_csv, write_metrics

    src, _, cfg = _load_run(args.run)
    _checkpoint_args(args, src)
    ds, hashes, _, _ = prepare_dataset(args, cfg)
    folds = make_folds(ds.samples, cfg.n_folds, cfg.fold_mode, cfg.seed, cfg.valid_fraction)
    fold_ids = _parse_folds(args.folds, cfg.n_folds) or [
        i for i in range(cfg.n_folds) if (src / f"checkpoint_fold{i}.pt").exists()]
    if not fold_ids:
        raise InputError(f"no checkpoints found in {src}")
    run = new_run_dir(args.out, cfg, "evaluate")
    out = {"config_hash": cfg.hash(), "source_run": src.name, "folds": []}
    for i in fold_ids:
        ckpt = read_checkpoint(src / f"checkpoint_fold{i}.pt", expect=cfg)
        bundle = _fold_bundle(ds, ckpt, cfg)
        model = model_from_checkpoint(ckpt, bundle)
        test = bundle.records(folds[i].test)
        rep = evaluate(model, bundle, test)
        rec = {"fold": i, "test": rep.to_dict()}
        if args.fidelity:
            rows = fidelity_eval(model, bundle, test)
            write_fidelity_csv(rows, run / f"fidelity_fold{i}.csv")
            rec["fidelity"] = rows
        out["folds"].append(rec)
    write_metrics(out, run / "metrics.json")
    write_manifest(run, "evaluate", cfg, hashes, source_run=str(src))
    _print({"run_dir": str(run), "folds": out["folds"]})
    return EXIT_OK


def cmd_explain(args) -> int:
    from .explain import explain_pair, plot_explanation, resolve_drug, validate_explanation
    from .trainer import model_from_checkpoint, read_checkpoint

    ckpt_path = Path(args.checkpoint)
    ckpt = read_checkpoint(ckpt_path)
    cfg = TrainConfig.from_text(ckpt["config"])
    run_src = ckpt_path.parent if (ckpt_path.parent / "manifest.json").exists() else None
    _checkpoint_args(args, run_src)
    ds, hashes, _, _ = prepare_dataset(args, cfg)
    if list(ckpt["relation_names"]) != list(ds.relation_names):
        raise InputError("checkpoint relation types do not match the prepared data")
    bundle = _fold_bundle(ds, ckpt, cfg)
    model = model_from_checkpoint(ckpt, bundle)
    names = ds.id_maps.entities.names
    u = resolve_drug(args.pair[0], names, ckpt["drugs"])
    v = resolve_drug(args.pair[1], names, ckpt["drugs"])
    if u == v:
        raise InputError("explain needs two different drugs")
    obj = explain_pair(model, bundle, u, v, names, ds.id_maps.entity_class, ds.relation_names,
                       top_k=args.top_k)
    validate_explanation(obj)
    run = new_run_dir(args.out, cfg, "explain")
    path = run / f"explanation_{names[u]}_{names[v]}.json"
    path.write_text(json.dumps(obj, indent=2) + "\n")
    if args.plot:
        plot_explanation(obj, run / f"explanation_{names[u]}_{names[v]}.png")
    write_manifest(run, "explain", cfg, hashes, checkpoint=str(ckpt_path))
    _print({"run_dir": str(run), "predicted": obj["predicted"],
            "top_fragments": obj["top_fragments"]})
    return EXIT_OK


def cmd_report(args) -> int:
    from .explain import plot_fidelity

    src, _, cfg = _load_run(args.run)
    path = src / "metrics.json"
    if not path.exists():
        raise InputError(f"{path} not found")
    metrics = json.loads(path.read_text())
    lines = [f"run {src.name}  config {metrics.get('config_hash')}",
             f"{'fold':>6} {'acc':>8} {'macro_f1':>9} {'pr_auc':>8} {'kappa':>8}"]
    for f in metrics["folds"]:
        t = f.get("test") or {}
        lines.append(f"{f['fold']:>6} {t.get('acc', float('nan')):8.4f} "
                     f"{t.get('macro_f1', float('nan')):9.4f} {t.get('pr_auc', float('nan')):8.4f} "
                     f"{t.get('cohen_kappa', float('nan')):8.4f}")
    agg = metrics.get("aggregate")
    if agg:
        lines.append(" mean " + " ".join(f"{agg[k]['mean']:.4f}±{agg[k]['std']:.4f}"
                                         for k in ("acc", "macro_f1", "pr_auc", "cohen_kappa")))
    for name, b in (metrics.get("baselines") or {}).items():
        lines.append(f"baseline {name}: macro-F1 {b['macro_f1']['mean']:.4f}")
    text = "\n".join(lines)
    print(text)
    run = new_run_dir(args.out, cfg, "report")
    (run / "report.txt").write_text(text + "\n")
    fid = [f["fidelity"] for f in metrics["folds"] if f.get("fidelity")]
    if fid:
        mean_rows = [{"sparsity": rows[0]["sparsity"],
                      "fid_plus": float(np.mean([r["fid_plus"] for r in rows])),
                      "fid_minus": float(np.mean([r["fid_minus"] for r in rows]))}
                     for rows in zip(*fid)]
        (run / "fidelity_mean.json").write_text(json.dumps(mean_rows, indent=2) + "\n")
        if args.plot:
            plot_fidelity(mean_rows, run / "fidelity.png")
    write_manifest(run, "report", cfg, {}, source_run=str(src))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddikit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ddikit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config entry (repeatable)")
        sp.add_argument("--out", default="runs", help="parent directory for run dirs")
        sp.add_argument("--cache", help=f"cache directory (default ${CACHE_ENV} or ~/.cache/ddikit)")
        if data:
            sp.add_argument("--data", required=True, help="directory with the four input files")
            sp.add_argument("--header", action="store_true", help="input files have a header row")
            sp.add_argument("--top-relations", type=int, default=None,
                            help="keep only the N most frequent interaction types")

    sp = sub.add_parser("prepare", help="parse inputs, cache molecules, write fold files")
    common(sp)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="cross-validated training")
    common(sp)
    sp.add_argument("--folds", help="comma-separated fold ids (default: all)")
    sp.add_argument("--fidelity", action="store_true", help="also run the fidelity analysis")
    sp.add_argument("--baselines", action="store_true",
                    help="also score the majority and fingerprint-logistic baselines")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="re-score saved checkpoints on their test folds")
    common(sp)
    sp.add_argument("--run", required=True, help="run directory written by train")
    sp.add_argument("--folds", help="comma-separated fold ids (default: all saved)")
    sp.add_argument("--fidelity", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("explain", help="explain one drug pair with a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--pair", nargs=2, required=True, metavar=("DRUG_U", "DRUG_V"))
    sp.add_argument("--top-k", type=int, default=2)
    sp.add_argument("--plot", action="store_true", help="also write a bar chart")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("report", help="summarize a training run")
    common(sp, data=False)
    sp.add_argument("--run", required=True)
    sp.add_argument("--plot", action="store_true", help="also plot mean fidelity curves")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    from .explain import UnknownDrugError
    from .trainer import CheckpointError, NumericError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"ddikit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, UnknownDrugError, CheckpointError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ddikit: error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
