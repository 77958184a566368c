"""Fold training, evaluation, and fidelity/sparsity analysis."""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .batching import DataBundle, PairRecord, collate
from .config import TrainConfig
from .kgstore import BiomedicalKG, FoldSplit, training_graph
from .metrics import MetricsReport, compute_metrics, macro_f1, confusion_matrix
from .model import DDIModel
from .objective import calibrate_gamma

logger = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}
SPARSITY_LEVELS = (0.5, 0.6, 0.7, 0.8, 0.9)


class NumericError(RuntimeError):
    pass


def seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(True)


@dataclass
class FoldData:
    bundle: DataBundle
    train: list
    valid: list
    test: list


def prepare_fold(kg: BiomedicalKG, fold: FoldSplit, mols, subs, n_relations, cfg: TrainConfig):
    """Training graph without held-out DDI edges, plus subgraphs for every split."""
    graph = training_graph(kg, fold.held_out())
    bundle = DataBundle(graph, mols, subs, n_relations, cfg.k, cfg.node_cap)
    return FoldData(bundle, bundle.records(fold.train), bundle.records(fold.valid),
                    bundle.records(fold.test))


def build_model(cfg: TrainConfig, bundle: DataBundle) -> DDIModel:
    torch.manual_seed(cfg.seed)
    model = DDIModel(cfg, bundle.kg.n_entities, sorted(bundle.mols), bundle.n_relations)
    return model.to(DTYPES[cfg.dtype])


@dataclass
class TrainResult:
    model: DDIModel
    gamma: float
    best_epoch: int
    valid_f1: float
    history: list = field(default_factory=list)  # per-step loss dicts
    test_metrics: MetricsReport | None = None
    train_metrics: MetricsReport | None = None


def _batches(records, batch_size, generator=None):
    order = (torch.randperm(len(records), generator=generator).tolist()
             if generator is not None else range(len(records)))
    order = list(order)
    for i in range(0, len(order), batch_size):
        yield [records[j] for j in order[i:i + batch_size]]


@torch.no_grad()
def predict_proba(model: DDIModel, bundle: DataBundle, records: list[PairRecord],
                  batch_size: int = 256, node_masks=None) -> np.ndarray:
    """Class probabilities; ``node_masks`` optionally gives one 0/1 array per record."""
    model.eval()
    dtype = next(model.parameters()).dtype
    edge_index = bundle.kg_edge_index()
    out = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        batch = collate(chunk, bundle, dtype)
        mask = None
        if node_masks is not None:
            mask = torch.as_tensor(np.concatenate(node_masks[start:start + batch_size]), dtype=dtype)
        logits = model(batch, edge_index, node_mask=mask).logits
        out.append(torch.softmax(logits, -1).cpu().numpy())
    if not out:
        return np.zeros((0, model.n_relations))
    return np.concatenate(out)


def evaluate(model, bundle, records, batch_size=256) -> MetricsReport:
    probs = predict_proba(model, bundle, records, batch_size)
    y = np.array([r.sample.r for r in records])
    return compute_metrics(y, probs, model.n_relations)


def _valid_f1(model, bundle, records):
    probs = predict_proba(model, bundle, records)
    y = np.array([r.sample.r for r in records])
    return macro_f1(confusion_matrix(y, probs.argmax(1), model.n_relations))


def train_fold(cfg: TrainConfig, data: FoldData, log_path=None, progress=None) -> TrainResult:
    """Mini-batch Adam with early stopping on validation macro-F1.

    With ``gamma < 0`` in the config the MI weight is calibrated once on the first
    batch so that ``gamma * L_MI = L_P / gamma_ratio`` and then frozen.
    """
    seed_everything(cfg.seed)
    bundle = data.bundle
    model = build_model(cfg, bundle)
    dtype = DTYPES[cfg.dtype]
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    edge_index = bundle.kg_edge_index()
    gamma = cfg.gamma if cfg.gamma >= 0 else None
    best_state = copy.deepcopy(model.state_dict())
    best_f1, best_epoch, stale = -1.0, 0, 0
    history = []
    step = 0
    select_on = data.valid if data.valid else data.train
    log_fh = open(log_path, "w", newline="") if log_path else None
    writer = csv.writer(log_fh) if log_fh else None
    if writer:
        writer.writerow(["step", "epoch", "L_P", "L_C", "L_MI", "total"])
    try:
        for epoch in range(cfg.epochs):
            model.train()
            for chunk in _batches(data.train, cfg.batch_size, gen):
                batch = collate(chunk, bundle, dtype)
                out = model(batch, edge_index)
                if gamma is None:
                    L_P, _, L_MI = model.loss_terms(out, batch)
                    gamma = calibrate_gamma(L_P, L_MI, cfg.gamma_ratio)
                    logger.info("calibrated gamma = %.6g", gamma)
                report = model.loss(out, batch, gamma)
                if not torch.isfinite(report.total):
                    raise NumericError(f"non-finite loss at epoch {epoch} step {step}: "
                                       f"{report.as_floats()}")
                opt.zero_grad()
                report.total.backward()
                opt.step()
                row = {"step": step, "epoch": epoch, **report.as_floats()}
                history.append(row)
                if writer:
                    writer.writerow([step, epoch] + [f"{row[k]:.8g}" for k in
                                                     ("L_P", "L_C", "L_MI", "total")])
                step += 1
            f1 = _valid_f1(model, bundle, select_on)
            if progress:
                progress(epoch, f1)
            if f1 > best_f1:
                best_f1, best_epoch, stale = f1, epoch, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best_state)
    if gamma is None:
        gamma = 0.0
    result = TrainResult(model, gamma, best_epoch, best_f1, history)
    if data.test:
        result.test_metrics = evaluate(model, bundle, data.test)
    return result


# -- interpretability -----------------------------------------------------------

@torch.no_grad()
def node_importance(model: DDIModel, bundle: DataBundle, records, batch_size=256):
    """CASPool weights per record (one array per subgraph)."""
    model.eval()
    if model.cfg.no_tsbkg or model.cfg.mean_pool:
        raise ValueError("node importance needs the context-aware pooling branch")
    dtype = next(model.parameters()).dtype
    out = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        batch = collate(chunk, bundle, dtype)
        scores = model(batch, bundle.kg_edge_index()).node_scores.cpu().numpy()
        idx = batch.kg_index.numpy()
        out += [scores[idx == b] for b in range(len(chunk))]
    return out


def important_mask(scores: np.ndarray, sparsity: float) -> np.ndarray:
    """1 for the top ``round((1 - sparsity) * n)`` nodes by score (ties by position)."""
    n = len(scores)
    keep = int(round((1.0 - sparsity) * n))
    order = np.argsort(-scores, kind="mergesort")
    mask = np.zeros(n)
    mask[order[:keep]] = 1.0
    return mask


def fidelity_eval(model: DDIModel, bundle: DataBundle, records, sparsities=SPARSITY_LEVELS):
    """Fidelity+/- of CASPool explanations with node-feature masking.

    Fid+ is the accuracy drop when the important nodes' input features are zeroed,
    Fid- the drop when the unimportant ones are; edges are never touched.
    """
    y = np.array([r.sample.r for r in records])
    base = (predict_proba(model, bundle, records).argmax(1) == y).mean()
    scores = node_importance(model, bundle, records)
    rows = []
    for s in sparsities:
        imp = [important_mask(sc, s) for sc in scores]
        drop_imp = [1.0 - m for m in imp]
        acc_plus = (predict_proba(model, bundle, records, node_masks=drop_imp).argmax(1) == y).mean()
        acc_minus = (predict_proba(model, bundle, records, node_masks=imp).argmax(1) == y).mean()
        rows.append({"sparsity": float(s), "fid_plus": float(base - acc_plus),
                     "fid_minus": float(base - acc_minus)})
    return rows


def write_fidelity_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["sparsity", "fid_plus", "fid_minus"])
        w.writeheader()
        w.writerows(rows)


def check_finite(t: torch.Tensor, what: str):
    if not torch.isfinite(t).all():
        raise NumericError(f"non-finite values in {what}")


def params_by_group(model: DDIModel) -> dict:
    """Parameter lists grouped by component, for gradient checks and reporting."""
    groups = {}
    for name, p in model.named_parameters():
        top = name.split(".")[0]
        if top == "hig":
            top = "hig." + name.split(".")[1]
        groups.setdefault(top, []).append((name, p))
    return groups


def is_finite_number(x) -> bool:
    return isinstance(x, float) and math.isfinite(x)


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, result: TrainResult, cfg: TrainConfig, bundle: DataBundle,
                    entity_names, relation_names, held_out, fold_id: int = 0):
    """Named tensors plus everything needed to rebuild the fold's training graph."""
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "config": cfg.to_text(),
        "config_hash": cfg.hash(),
        "model_hash": cfg.model_hash(),
        "fold_id": fold_id,
        "entity_names": list(entity_names),
        "relation_names": list(relation_names),
        "drugs": sorted(int(d) for d in bundle.mols),
        "held_out": [[s.u, s.v, s.r] for s in held_out],  # DdiSample field order
        "gamma": float(result.gamma),
        "best_epoch": int(result.best_epoch),
        "state_dict": {k: v.detach().cpu() for k, v in result.model.state_dict().items()},
    }, path)


def read_checkpoint(path, expect: TrainConfig | None = None) -> dict:
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises several types for corrupt files
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(ckpt, dict) or ckpt.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format "
                              f"{ckpt.get('format_version') if isinstance(ckpt, dict) else None}")
    if expect is not None and ckpt["model_hash"] != expect.model_hash():
        raise CheckpointError(f"{path}: model hash {ckpt['model_hash']} does not match the "
                              f"configuration ({expect.model_hash()})")
    return ckpt


def model_from_checkpoint(ckpt: dict, bundle: DataBundle) -> DDIModel:
    cfg = TrainConfig.from_text(ckpt["config"])
    if cfg.model_hash() != ckpt["model_hash"]:
        raise CheckpointError("stored configuration does not reproduce the stored model hash")
    model = DDIModel(cfg, bundle.kg.n_entities, ckpt["drugs"], bundle.n_relations)
    model = model.to(DTYPES[cfg.dtype])
    state = model.state_dict()
    stored = ckpt["state_dict"]
    if set(state) != set(stored):
        missing, extra = set(state) - set(stored), set(stored) - set(state)
        raise CheckpointError(f"parameter names differ (missing {sorted(missing)}, "
                              f"unexpected {sorted(extra)})")
    for name, tensor in stored.items():
        if tuple(tensor.shape) != tuple(state[name].shape):
            raise CheckpointError(f"{name}: shape {tuple(tensor.shape)} != "
                                  f"{tuple(state[name].shape)}")
    model.load_state_dict(stored)
    model.eval()
    return model


# -- cross-validation -----------------------------------------------------------

def run_cv(cfg: TrainConfig, dataset, out_dir=None, folds=None, fidelity=False,
           baselines=False, progress=None) -> dict:
    """Train and test every fold; returns (and optionally writes) the metrics record.

    The record has no timestamps or paths, so identical inputs give an identical file.
    """
    from pathlib import Path

    from .kgstore import make_folds
    from .metrics import aggregate, corrected_paired_ttest

    splits = make_folds(dataset.samples, cfg.n_folds, cfg.fold_mode, cfg.seed, cfg.valid_fraction)
    chosen = range(len(splits)) if folds is None else list(folds)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    records, reports, base_reports = [], [], {"majority": [], "fingerprint_logistic": []}
    for i in chosen:
        fold = splits[i]
        data = prepare_fold(dataset.kg, fold, dataset.mols, dataset.subs, dataset.n_relations, cfg)
        log_path = out / f"training_log_fold{i}.csv" if out is not None else None
        cb = (lambda e, f, i=i: progress(i, e, f)) if progress else None
        res = train_fold(cfg, data, log_path=log_path, progress=cb)
        rec = {"fold": i, "n_train": len(data.train), "n_valid": len(data.valid),
               "n_test": len(data.test), "best_epoch": res.best_epoch,
               "valid_macro_f1": float(res.valid_f1),
               "gamma": float(res.gamma),
               "test": res.test_metrics.to_dict() if res.test_metrics else None}
        if res.test_metrics:
            reports.append(res.test_metrics)
        if fidelity and data.test and not (cfg.no_tsbkg or cfg.mean_pool):
            rows = fidelity_eval(res.model, data.bundle, data.test)
            rec["fidelity"] = rows
            if out is not None:
                write_fidelity_csv(rows, out / f"fidelity_fold{i}.csv")
        if baselines and data.test:
            rec["baselines"] = {}
            for name, rep in _baseline_reports(dataset, fold).items():
                base_reports[name].append(rep)
                rec["baselines"][name] = rep.to_dict()
        if out is not None:
            save_checkpoint(out / f"checkpoint_fold{i}.pt", res, cfg, data.bundle,
                            dataset.id_maps.entities.names, dataset.relation_names,
                            fold.held_out(), fold_id=i)
        records.append(rec)
    metrics = {"config_hash": cfg.hash(), "folds": records}
    if reports:
        metrics["aggregate"] = aggregate(reports)
    if baselines and base_reports["majority"]:
        metrics["baselines"] = {n: aggregate(r) for n, r in base_reports.items()}
        if len(reports) >= 2:
            n_test = float(np.mean([r["n_test"] for r in records]))
            n_train = float(np.mean([r["n_train"] + r["n_valid"] for r in records]))
            ours = [r.macro_f1 for r in reports]
            metrics["significance"] = {}
            for name, reps in base_reports.items():
                t, p = corrected_paired_ttest(ours, [r.macro_f1 for r in reps], n_train, n_test)
                metrics["significance"][name] = {"t": t, "p": p}
    if out is not None:
        write_metrics(metrics, out / "metrics.json")
    return metrics


def _baseline_reports(dataset, fold) -> dict:
    from .baselines import FingerprintLogistic, MajorityClass

    train = fold.train + fold.valid
    y = np.array([s.r for s in fold.test])
    smiles = {d: m.smiles for d, m in dataset.mols.items()}
    out = {}
    for name, model in (("majority", MajorityClass()),
                        ("fingerprint_logistic", FingerprintLogistic(smiles))):
        model.fit(train, dataset.n_relations)
        out[name] = compute_metrics(y, model.predict_proba(fold.test), dataset.n_relations)
    return out


def write_metrics(metrics: dict, path):
    import json

    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    with open(path, "w") as fh:
        json.dump(clean(metrics), fh, indent=2, sort_keys=True)
        fh.write("\n")
